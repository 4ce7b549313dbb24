"""Command-line entry points composing the toolkit end to end.

Every command is manifest-driven, processes clips independently (one bad
clip never aborts the batch), prints one machine-readable summary line
per clip, dumps the resolved config into the output tree, and exits
nonzero when any clip failed.
"""

from __future__ import annotations

import os
import sys
from concurrent.futures import ThreadPoolExecutor

import click
import numpy as np

from . import records
from .config import Config
from .errors import ValidationError
from .geom import project_points
from .manifest import Manifest, sample_clips
from .metrics import MaskTrack, VideoClip, aggregate_reports, evaluate_clip_pair
from .rectify import filter_episodes, rectify_episode, score_episode
from .skeleton import (GripperState, GripperTemplate, gripper_fk,
                       gripper_topology, render_skeleton)
from .synth import SynthScene, synth_generate
from .track import run_hoi_pipeline


def _common(fn):
    fn = click.option("--config", "config_path", type=click.Path(exists=True),
                      default=None, help="JSON config file")(fn)
    fn = click.option("--set", "overrides", multiple=True,
                      help="config override, e.g. track.theta_iou=0.4")(fn)
    fn = click.option("--seed", default=0, show_default=True)(fn)
    fn = click.option("--workers", default=1, show_default=True)(fn)
    fn = click.option("--clips", default=None,
                      help="comma-separated clip ids (default: all)")(fn)
    return fn


def _load(manifest_path, config_path, overrides):
    try:
        cfg = Config.load(config_path, overrides)
        manifest = Manifest.load(manifest_path)
    except ValidationError as exc:
        raise click.ClickException(str(exc)) from exc
    return manifest, cfg


def _select(manifest, clips):
    wanted = None if clips is None else set(clips.split(","))
    selected = [c for c in manifest.clips if not c.excluded
                and (wanted is None or c.clip_id in wanted)]
    if wanted:
        missing = wanted - {c.clip_id for c in selected}
        if missing:
            raise click.ClickException(
                f"unknown or excluded clip ids: {sorted(missing)}")
    return selected


def _run_clips(clips, worker, workers):
    """Run worker(clip) per clip, isolating failures. Returns failure count."""
    def safe(clip):
        try:
            line = worker(clip)
            return clip.clip_id, True, line or ""
        except Exception as exc:  # per-clip isolation is the contract
            return clip.clip_id, False, f"error={type(exc).__name__} detail={exc}"

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(safe, clips))
    else:
        results = [safe(c) for c in clips]
    failures = 0
    for clip_id, ok, line in results:
        status = "ok" if ok else "fail"
        click.echo(f"clip={clip_id} status={status} {line}".rstrip())
        failures += not ok
    return failures


def _finish(out, cfg, failures, total):
    cfg.save(os.path.join(out, "config.json"))
    click.echo(f"summary clips={total} failed={failures}")
    if failures:
        sys.exit(1)


@click.group()
def main():
    """Skeleton prompt rendering, hand tracking cleanup, rectification, metrics."""


@main.command("synth")
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
@click.option("--frames", default=60, show_default=True)
@click.option("--width", default=320, show_default=True)
@click.option("--height", default=240, show_default=True)
@click.option("--dropout", default=0.0, show_default=True)
@click.option("--spurious", default=0.0, show_default=True)
@click.option("--jitter", default=0.0, show_default=True)
@click.option("--outliers", default=0.0, show_default=True)
@click.option("--drift", default=3.0, show_default=True)
def cmd_synth(out, seed, frames, width, height, dropout, spurious, jitter,
              outliers, drift):
    """Generate a synthetic dataset tree with ground truth."""
    scene = SynthScene(seed=seed, width=width, height=height, n_frames=frames,
                       dropout_rate=dropout, spurious_rate=spurious,
                       jitter_sigma=jitter, outlier_frac=outliers, drift_px=drift)
    synth_generate(scene, out)
    click.echo(f"clip=hands_000 status=ok out={out}")
    click.echo(f"clip=robot_000 status=ok out={out}")
    click.echo("summary clips=2 failed=0")


def _robot_joint_sequence(clip, cfg):
    states = records.read_state_log(clip.state_log)
    cam = records.read_camera(clip.camera_file)
    template = GripperTemplate()
    seq = []
    for rec in states:
        js3 = gripper_fk(GripperState(rec.ee_pose, rec.openness), template)
        seq.append(project_points(js3, cam))
    return states, cam, seq


@main.command("render-robot")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@_common
def cmd_render_robot(manifest_path, out, config_path, overrides, seed, workers,
                     clips):
    """Render gripper skeleton prompt frames from robot state logs."""
    manifest, cfg = _load(manifest_path, config_path, overrides)
    os.makedirs(out, exist_ok=True)
    topo = gripper_topology()

    def worker(clip):
        if clip.state_log is None or clip.camera_file is None:
            raise ValidationError("render-robot needs state_log and camera_file")
        _, cam, seq = _robot_joint_sequence(clip, cfg)
        style = cfg.render.style()
        size = (cam.width, cam.height)
        frames = [render_skeleton(js, topo, style, size) for js in seq]
        records.write_frames(os.path.join(out, clip.clip_id, "frames"), frames)
        return f"frames={len(frames)}"

    selected = _select(manifest, clips)
    failures = _run_clips(selected, worker, workers)
    _finish(out, cfg, failures, len(selected))


@main.command("track-hands")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@_common
def cmd_track_hands(manifest_path, out, config_path, overrides, seed, workers,
                    clips):
    """Clean up per-frame hand detections into smoothed tracklets."""
    manifest, cfg = _load(manifest_path, config_path, overrides)
    os.makedirs(out, exist_ok=True)

    def worker(clip):
        if clip.detection_file is None:
            raise ValidationError("track-hands needs a detection_file")
        detections = records.read_detections(clip.detection_file)
        result = run_hoi_pipeline(detections, cfg.track)
        clip_out = os.path.join(out, clip.clip_id)
        os.makedirs(clip_out, exist_ok=True)
        records.write_tracklets(os.path.join(clip_out, "tracklets.jsonl"),
                                result.tracklets)
        hands = ",".join(sorted(result.joints_by_hand)) or "none"
        return f"tracklets={len(result.tracklets)} hands={hands}"

    selected = _select(manifest, clips)
    failures = _run_clips(selected, worker, workers)
    _finish(out, cfg, failures, len(selected))


@main.command("rectify")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--render/--no-render", "do_render", default=True,
              show_default=True, help="also re-render rectified frames")
@_common
def cmd_rectify(manifest_path, out, do_render, config_path, overrides, seed,
                workers, clips):
    """Homography-rectify rendered robot skeletons against observations."""
    manifest, cfg = _load(manifest_path, config_path, overrides)
    os.makedirs(out, exist_ok=True)
    topo = gripper_topology()

    def worker(clip):
        if None in (clip.state_log, clip.camera_file, clip.correspondence_file):
            raise ValidationError(
                "rectify needs state_log, camera_file and correspondence_file")
        states, cam, seq = _robot_joint_sequence(clip, cfg)
        corr = dict(records.read_correspondences(clip.correspondence_file))
        stream = [corr.get(rec.frame_index, np.zeros((0, 5))) for rec in states]
        result = rectify_episode(seq, stream, cfg.rectify.ransac(seed),
                                 cfg.rectify.min_pairs)
        clip_out = os.path.join(out, clip.clip_id)
        os.makedirs(clip_out, exist_ok=True)
        records.write_rectified(os.path.join(clip_out, "rectified.jsonl"),
                                [rec.frame_index for rec in states], result)
        if do_render:
            frames = [render_skeleton(js, topo, cfg.render.style(),
                                      (cam.width, cam.height))
                      for js in result.joints]
            records.write_frames(os.path.join(clip_out, "frames"), frames)
        carried = sum(result.carried_over)
        return f"frames={len(seq)} carried_over={carried}"

    selected = _select(manifest, clips)
    failures = _run_clips(selected, worker, workers)
    _finish(out, cfg, failures, len(selected))


@main.command("filter-episodes")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@_common
def cmd_filter_episodes(manifest_path, out, config_path, overrides, seed,
                        workers, clips):
    """Score episodes by match discrepancy and decide keep/discard."""
    manifest, cfg = _load(manifest_path, config_path, overrides)
    os.makedirs(out, exist_ok=True)
    decisions = []

    def worker(clip):
        if clip.correspondence_file is None:
            raise ValidationError("filter-episodes needs a correspondence_file")
        stream = records.read_correspondences(clip.correspondence_file)
        score = score_episode(stream)
        keep = filter_episodes([score], cfg.rectify.tau_med,
                               cfg.rectify.tau_frac)[0]
        decisions.append({
            "clip_id": clip.clip_id,
            "keep": keep,
            "episode_median_px": score.episode_median,
            "frames_evaluated": score.frames_evaluated,
            "frames_skipped": score.frames_skipped,
        })
        return (f"keep={str(keep).lower()} "
                f"median_px={score.episode_median:.3f}")

    selected = _select(manifest, clips)
    failures = _run_clips(selected, worker, 1)  # decisions list stays ordered
    records.write_jsonl(os.path.join(out, "decisions.jsonl"),
                        sorted(decisions, key=lambda d: d["clip_id"]))
    _finish(out, cfg, failures, len(selected))


@main.command("sample-clips")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--n", default=100, show_default=True)
@_common
def cmd_sample_clips(manifest_path, out, n, config_path, overrides, seed,
                     workers, clips):
    """Sample training windows biased toward gripper state changes."""
    manifest, cfg = _load(manifest_path, config_path, overrides)
    os.makedirs(out, exist_ok=True)
    windows = []

    def worker(clip):
        if clip.state_log is None:
            raise ValidationError("sample-clips needs a state_log")
        states = records.read_state_log(clip.state_log)
        ws = sample_clips(states, n, cfg.sampling.length, cfg.sampling.tau_g,
                          cfg.sampling.p_event, seed, clip.clip_id, clip.fps)
        windows.extend(ws)
        return f"windows={len(ws)}"

    selected = _select(manifest, clips)
    failures = _run_clips(selected, worker, 1)
    records.write_jsonl(os.path.join(out, "windows.jsonl"), [{
        "clip_id": w.clip_id, "start_frame": w.start_frame,
        "length": w.length, "fps": w.fps,
    } for w in windows])
    _finish(out, cfg, failures, len(selected))


@main.command("evaluate")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True))
@click.option("--gen-root", required=True, type=click.Path(exists=True),
              help="directory with <clip_id>/frames PNG trees to evaluate")
@click.option("--out", required=True, type=click.Path())
@click.option("--gen-mask-root", default=None, type=click.Path())
@click.option("--gt-mask-root", default=None, type=click.Path())
@_common
def cmd_evaluate(manifest_path, gen_root, out, gen_mask_root, gt_mask_root,
                 config_path, overrides, seed, workers, clips):
    """Score generated clips against ground-truth frames (and mask tracks)."""
    manifest, cfg = _load(manifest_path, config_path, overrides)
    os.makedirs(out, exist_ok=True)
    reports = []

    def _mask(root, clip_id):
        if root is None:
            return None
        path = os.path.join(root, clip_id)
        if not os.path.exists(path):
            return None
        return MaskTrack(records.read_mask_track(path))

    def worker(clip):
        if clip.frame_dir is None:
            raise ValidationError("evaluate needs ground-truth frame_dir")
        gen_dir = os.path.join(gen_root, clip.clip_id, "frames")
        if not os.path.isdir(gen_dir):
            gen_dir = os.path.join(gen_root, clip.clip_id)
        gen = VideoClip(records.read_frames(gen_dir), clip.fps)
        gt = VideoClip(records.read_frames(clip.frame_dir), clip.fps)
        report = evaluate_clip_pair(gen, gt,
                                    _mask(gen_mask_root, clip.clip_id),
                                    _mask(gt_mask_root, clip.clip_id),
                                    cfg.metrics, clip.clip_id)
        reports.append(report)
        parts = [f"{k}={getattr(report, k):.4f}"
                 for k in ("psnr", "ssim", "st_iou")
                 if getattr(report, k) is not None]
        return " ".join(parts)

    selected = _select(manifest, clips)
    failures = _run_clips(selected, worker, 1)
    reports.sort(key=lambda r: r.clip_id or "")
    agg = aggregate_reports(reports)
    records.write_reports(os.path.join(out, "reports.jsonl"), reports, agg)
    click.echo(records.format_report_table(reports, agg))
    _finish(out, cfg, failures, len(selected))


if __name__ == "__main__":
    main()

"""skelkit: skeleton action-prompt construction, cleanup, and evaluation.

Modules:
    geom      poses, pinhole projection, DLT/RANSAC homographies, warping
    skeleton  topologies, gripper forward kinematics, rasterization
    track     hand tracklet building, filtering, gap fill, one-euro smoothing
    rectify   episode scoring/filtering and per-frame homography rectification
    metrics   PSNR, SSIM, spatio-temporal IoU, mask/boundary IoU, J&F
    manifest  dataset manifests and event-biased clip sampling
    synth     seeded synthetic scenes with exact ground truth
    records   line-delimited record schemas, PNG frame/mask I/O
    cli       manifest-driven subcommands composing everything
"""

from .errors import (DegenerateInputError, NoConsensusError, UnscorableError,
                     ValidationError)
from .geom import (CameraModel, Correspondence, Homography, JointSet2D,
                   JointSet3D, Pose3, apply_homography, estimate_homography_dlt,
                   estimate_homography_ransac, project_points, warp_frame)
from .manifest import ClipSpec, ClipWindow, Manifest, sample_clips
from .metrics import (MaskTrack, MetricsConfig, MetricsReport, VideoClip,
                      boundary_iou, evaluate_clip_pair, jf_score, mask_iou,
                      motion_mask, psnr, ssim, st_iou)
from .rectify import (EpisodeScore, RansacParams, RectifyResult,
                      filter_episodes, rectify_episode, score_episode)
from .skeleton import (GripperState, GripperTemplate, PromptClip, RenderStyle,
                       SkeletonTopology, gripper_fk, gripper_topology,
                       hand_topology, region_weight_mask, render_clip,
                       render_skeleton)
from .synth import SynthScene, synth_generate
from .track import (Detection, HoiConfig, OneEuroParams, Tracklet, box_iou,
                    build_tracklets, fill_gaps, handedness_filter,
                    merge_tracklets, number_of_hands_filter, one_euro,
                    one_euro_alpha, propagate_track, run_hoi_pipeline)

__version__ = "0.1.0"

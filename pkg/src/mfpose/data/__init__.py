from mfpose.data.dataset import (Sample, export_videos, heatmap_target, load_videos, make_dataset,
                                 windows_from_videos)
from mfpose.data.skeleton import GROUPS, JOINTS, NUM_JOINTS
from mfpose.data.synthetic import DatasetSpec, SyntheticVideo, generate_video, generate_videos
from mfpose.data.windows import FrameWindow, augment, clip_bbox, enlarge_bbox, extract_window

__all__ = ["DatasetSpec", "FrameWindow", "GROUPS", "JOINTS", "NUM_JOINTS", "Sample", "SyntheticVideo",
           "augment", "clip_bbox", "enlarge_bbox", "export_videos", "extract_window", "generate_video",
           "generate_videos", "heatmap_target", "load_videos", "make_dataset", "windows_from_videos"]

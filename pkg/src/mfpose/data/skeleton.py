"""The 15-joint skeleton used by the synthetic figure and the metrics tables.

Joint order puts the upper body first so contiguous index ranges correspond to
body halves (used by half-body augmentation).
"""

JOINTS = (
    "head", "neck",
    "r_shoulder", "l_shoulder", "r_elbow", "l_elbow", "r_wrist", "l_wrist",
    "pelvis", "r_hip", "l_hip", "r_knee", "l_knee", "r_ankle", "l_ankle",
)
NUM_JOINTS = len(JOINTS)
INDEX = {name: i for i, name in enumerate(JOINTS)}

# table columns, in the order the result tables use
GROUPS = {
    "Head": ("head", "neck"),
    "Shoulder": ("r_shoulder", "l_shoulder"),
    "Elbow": ("r_elbow", "l_elbow"),
    "Wrist": ("r_wrist", "l_wrist"),
    "Hip": ("pelvis", "r_hip", "l_hip"),
    "Knee": ("r_knee", "l_knee"),
    "Ankle": ("r_ankle", "l_ankle"),
}
GROUP_INDICES = {g: tuple(INDEX[j] for j in names) for g, names in GROUPS.items()}

# torso reference: mid-shoulder to mid-hip
TORSO = (("r_shoulder", "l_shoulder"), ("r_hip", "l_hip"))

# (from, to, RGB) in drawing order
LIMBS = (
    ("neck", "pelvis", (0.85, 0.85, 0.85)),
    ("r_shoulder", "l_shoulder", (0.85, 0.85, 0.85)),
    ("r_hip", "l_hip", (0.85, 0.85, 0.85)),
    ("r_hip", "r_knee", (0.95, 0.55, 0.10)),
    ("r_knee", "r_ankle", (0.60, 0.30, 0.05)),
    ("l_hip", "l_knee", (0.10, 0.80, 0.80)),
    ("l_knee", "l_ankle", (0.05, 0.45, 0.50)),
    ("r_shoulder", "r_elbow", (0.90, 0.20, 0.20)),
    ("r_elbow", "r_wrist", (0.55, 0.05, 0.10)),
    ("l_shoulder", "l_elbow", (0.25, 0.45, 0.95)),
    ("l_elbow", "l_wrist", (0.10, 0.15, 0.55)),
    ("neck", "head", (1.00, 0.85, 0.30)),
)

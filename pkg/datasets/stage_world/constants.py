import numpy as np

# Task registry
task_families = (
    "press",
    "close-slide",
    "close-hinge",
    "rotate",
    "open-slide",
    "pick-place",
    "push",
    "pull",
    "lock",
    "unlock",
    "insert",
    "lift"
)
test_families = ("press", "close-slide", "close-hinge", "rotate", "open-slide")

object_colors = {
    "red": (1.0, 0.0, 0.0),
    "green": (0.0, 1.0, 0.0),
    "blue": (0.0, 0.0, 1.0),
    "yellow": (1.0, 1.0, 0.0),
    "magenta": (1.0, 0.0, 1.0),
    "cyan": (0.0, 1.0, 1.0)
}

# Families whose object travels with the actuation (drawers, pucks, ...). The others stay anchored.
moving_families = ("close-slide", "open-slide", "pick-place", "push", "pull", "insert", "lift")

# Actuation direction in degrees per family; all directions point left and/or down so targets stay on the stage.
actuation_angles = {
    "press": 270.,
    "close-slide": 180.,
    "close-hinge": 225.,
    "rotate": 200.,
    "open-slide": 250.,
    "pick-place": 215.,
    "push": 190.,
    "pull": 260.,
    "lock": 235.,
    "unlock": 205.,
    "insert": 245.,
    "lift": 265.
}
angle_jitter = 10.
anchor_range = (0.72, 0.9)

stage_count = 2
optimality_levels = ("expert", "medium", "random")

# Geometry and dynamics
episode_length = 64
home_position = (0.06, 0.06)
home_jitter = 0.04
max_step = 0.05
grip_rate = 0.25
grip_threshold = 0.5
reach_radius = 0.05
lane_width = 0.05
travel_distance = 0.5
subgoal_overshoot = 0.03

# Reward shaping
w_reach = 0.3
w_act = 0.6
success_bonus = 1.0

# Scripted policy noise (standard deviation of the Gaussian added to the controller output)
policy_noise = {
    "expert": 0.1,
    "medium": 0.5
}

# Rendering
frame_size = 32
background_color = (0.1, 0.1, 0.1)
goal_color = (1.0, 1.0, 1.0)
agent_color = (0.6, 0.6, 0.6)
object_half_size = 2
object_dim_factor = 0.3

# Layout of the flat state vector
state_fields = ("agent_x", "agent_y", "gripper", "object_x", "object_y", "actuation", "reached", "actuated", "t")
state_dim = len(state_fields)
observation_dim = state_dim
action_dim = 3

# Language
max_instruction_length = 16
pad_token = "<pad>"
pad_id = 0
instruction_styles = ("imperative", "phrase", "description", "correct-color", "wrong-color")

# Dataset files
format_version = 1
container_magic = b"MTVLP\x00\x01\x00"
manifest_file = "manifest.json"
vocab_file = "vocab.json"
instructions_file = "instructions.json"
tasks_dir = "tasks"
trajectory_extension = ".traj"
frames_extension = ".frames"

default_frame_shape = (episode_length + 1, frame_size, frame_size, 3)
default_dtype = np.float32

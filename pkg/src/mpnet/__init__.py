"""Neural motion planning: obstacle encoder, planning network, bidirectional
planner with replanning, and an RRT* baseline."""

from .geometry import Obstacle, RigidBody, Workspace, path_feasible, segment_collision_free
from .planner import MpnetConfig, MpnetModels, PlanResult, lazy_states_contraction, mpnet_plan
from .pointcloud import PointCloud, sample_obstacle_cloud
from .rrtstar import GoalRegion, RrtConfig, rrtstar_plan

__version__ = "0.1.0"

"""Dataset generation, training stages, benchmarking, rendering and the CLI."""

from .bench import BenchReport, run_benchmark
from .config import PipelineConfig, WorkspaceSpec, defaults_for, load_config
from .dataset import gen_data, gen_expert_paths, load_data
from .render import render_svg
from .workspaces import GenerationError, gen_workspaces

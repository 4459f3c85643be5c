"""Pipeline stages, one per subcommand, registered by id."""
from __future__ import annotations

from src.stages.associate import AssociateStage
from src.stages.base import Stage, StageContext
from src.stages.build_bench import BuildBenchStage
from src.stages.evaluate import EvalStage
from src.stages.init_map import InitMapStage
from src.stages.optimize import OptimizeStage
from src.stages.project import ProjectStage
from src.stages.query import QueryStage
from src.stages.synth import SynthStage

# Registration order is the order subcommands appear in --help
STAGES: dict[str, type[Stage]] = {
    s.id: s
    for s in (
        InitMapStage,
        OptimizeStage,
        AssociateStage,
        ProjectStage,
        BuildBenchStage,
        SynthStage,
        EvalStage,
        QueryStage,
    )
}


def get_stage(stage_id: str) -> Stage:
    cls = STAGES.get(stage_id)
    if cls is None:
        raise KeyError(f"Unknown stage: {stage_id}. Available: {list(STAGES)}")
    return cls()


__all__ = ["STAGES", "Stage", "StageContext", "get_stage"]

"""
Run driver: initial data -> time stepping -> ledger, checkpoints, trajectory
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from loguru import logger

import config
from utils.checkpoint import write_checkpoint
from utils.errors import InvalidParameterError
from utils.functionals import LedgerRecorder
from utils.ledger import LEDGER_COLUMNS, EnergyLedger, write_ledger
from utils.run_config import RunConfig
from utils.solver import StepScheme, step
from utils.spectral_core import make_grid
from utils.state_model import FluidState, make_initial


@dataclass
class Trajectory:
    """States kept at the ledger cadence and paths of written checkpoints"""

    states: List[FluidState] = field(default_factory=list)
    checkpoints: List[Path] = field(default_factory=list)

    @property
    def final(self) -> FluidState:
        return self.states[-1]

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.states])


def scheme_of(cfg: RunConfig) -> StepScheme:
    return StepScheme(variant=cfg.scheme, order=cfg.order, integrating_factor=cfg.integrating_factor)


def output_dir(cfg: RunConfig) -> Path:
    return Path(cfg.output.dir) if cfg.output.dir else config.DATA_DIR


def resume_from(ledger: EnergyLedger) -> Dict[str, float]:
    """Initial density bound and last running integrals of an earlier run's ledger"""
    if len(ledger) == 0:
        raise InvalidParameterError("cannot resume from an empty ledger")
    point = {key: ledger[-1][key] for key in LEDGER_COLUMNS if key.startswith("int_")}
    point["rho0_inf"] = ledger[0]["rho_inf"]
    return point


def run(
    cfg: RunConfig,
    initial_state: Optional[FluidState] = None,
    write_files: bool = True,
    resume: Optional[Dict[str, float]] = None,
) -> Tuple[Trajectory, EnergyLedger]:
    """
    Advance cfg.steps steps of size cfg.dt from the configured initial data
    (or from initial_state when resuming) and record the ledger every
    cfg.cadence steps.

    When continuing an earlier run, pass `resume=resume_from(earlier_ledger)`
    so D1_tilde keeps the t = 0 density bound and the running integrals
    carry on instead of restarting at zero.
    """
    grid = make_grid(cfg.n, cfg.L)
    state = initial_state if initial_state is not None else make_initial(cfg.init, grid)
    scheme = scheme_of(cfg)
    rho0_inf = float(resume["rho0_inf"]) if resume else float(np.max(np.abs(state.rho)))
    rho_floor = cfg.rho_floor_factor * rho0_inf if cfg.scheme == "conservative" else None

    recorder = LedgerRecorder(
        rho0_inf=rho0_inf,
        besov=cfg.monitor.besov,
        higher_order=cfg.monitor.higher_order,
        weight_a0=cfg.monitor.weight_a0,
        weight_beta=cfg.monitor.weight_beta,
    )
    if resume:
        recorder.integrals.update({key: float(resume[key]) for key in recorder.integrals})
    ledger = EnergyLedger()
    trajectory = Trajectory(states=[state])
    out = output_dir(cfg)

    recorder.observe(state)
    ledger.append(recorder.row(state))
    logger.info(
        f"Run: {grid.n}^3, L={grid.box_len:.4g}, dt={cfg.dt}, steps={cfg.steps}, "
        f"scheme={cfg.scheme}/order {cfg.order}, from t={state.time:.6g}"
    )

    for k in range(1, cfg.steps + 1):
        state = step(state, cfg.dt, scheme, cfl=cfg.cfl, rho_floor=rho_floor)
        recorder.observe(state)
        if k % cfg.cadence == 0:
            ledger.append(recorder.row(state))
            if cfg.output.keep_trajectory:
                trajectory.states.append(state)
            logger.debug(f"step {k}/{cfg.steps}: t={state.time:.6g}, E0={ledger[-1]['E0']:.6e}")
        if write_files and cfg.output.checkpoint_every and k % cfg.output.checkpoint_every == 0:
            path = out / config.CHECKPOINT_PATTERN.format(step=k)
            trajectory.checkpoints.append(write_checkpoint(state, path, cfg.scheme))

    if trajectory.states[-1] is not state:
        trajectory.states.append(state)

    if write_files:
        final_path = out / config.CHECKPOINT_PATTERN.format(step=cfg.steps)
        if final_path not in trajectory.checkpoints:
            trajectory.checkpoints.append(write_checkpoint(state, final_path, cfg.scheme))
        write_ledger(ledger, out / config.LEDGER_FILE.name)

    logger.success(f"Run finished at t={state.time:.6g} with {len(ledger)} ledger rows")
    return trajectory, ledger

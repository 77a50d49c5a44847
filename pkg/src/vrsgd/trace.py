"""Per-epoch convergence records shared by the serial and async solvers."""

import math
from dataclasses import dataclass, field

CSV_COLUMNS = ("epoch", "wall_seconds", "objective_tilde", "objective_last",
               "suboptimality", "lyapunov", "max_staleness")


@dataclass
class ConvergenceTrace:
    epochs: list = field(default_factory=list)
    wall: list = field(default_factory=list)
    f_tilde: list = field(default_factory=list)
    f_last: list = field(default_factory=list)
    subopt: list = field(default_factory=list)
    lyap: list = field(default_factory=list)
    staleness: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add_row(self, epoch, wall, f_tilde, f_last, subopt=math.nan,
                lyap=math.nan, staleness=math.nan):
        if self.wall and wall <= self.wall[-1]:
            raise ValueError("wall clock must be strictly increasing")
        self.epochs.append(int(epoch))
        self.wall.append(float(wall))
        self.f_tilde.append(float(f_tilde))
        self.f_last.append(float(f_last))
        self.subopt.append(float(subopt))
        self.lyap.append(float(lyap))
        self.staleness.append(float(staleness))

    def __len__(self):
        return len(self.epochs)

    def set_reference(self, f_star):
        """Fill the suboptimality column from a reference optimum value."""
        self.metadata["f_star"] = float(f_star)
        self.subopt = [ft - f_star for ft in self.f_tilde]

    def rows(self):
        for k in range(len(self)):
            yield (self.epochs[k], self.wall[k], self.f_tilde[k], self.f_last[k],
                   self.subopt[k], self.lyap[k], self.staleness[k])

    def epochs_to_target(self, target):
        """First epoch whose suboptimality is <= target, or None."""
        for k in range(len(self)):
            s = self.subopt[k]
            if not math.isnan(s) and s <= target:
                return self.epochs[k]
        return None

    def time_to_target(self, target):
        for k in range(len(self)):
            s = self.subopt[k]
            if not math.isnan(s) and s <= target:
                return self.wall[k]
        return None

from dataclasses import dataclass
import math

from scipy.constants import epsilon_0, mu_0

from .errors import InputError


@dataclass(frozen=True)
class Materials:
    """Vacuum above the conductor plane, substrate (epsilon_r, mu_r) below."""

    epsilon_r: float = 1.0
    mu_r: float = 1.0

    def __post_init__(self):
        if not self.epsilon_r >= 1.0:
            raise InputError(f"epsilon_r must be >= 1, got {self.epsilon_r}")
        if not self.mu_r > 0.0:
            raise InputError(f"mu_r must be > 0, got {self.mu_r}")

    @classmethod
    def from_epsilon_eff(cls, epsilon_eff, mu_r=1.0):
        return cls(epsilon_r=2.0 * epsilon_eff - 1.0, mu_r=mu_r)

    @property
    def epsilon_eff(self):
        return 0.5 * (self.epsilon_r + 1.0)

    @property
    def mu_eff(self):
        # harmonic mean, since the two half-planes add as inverse inductances
        return 2.0 / (1.0 / self.mu_r + 1.0)

    @property
    def capacitance_scale(self):
        """(eps + 1) eps0 [F/m]: converts a geometric w-plane ratio to capacitance."""
        return (self.epsilon_r + 1.0) * epsilon_0

    @property
    def inverse_inductance_scale(self):
        """(1/mu + 1)/mu0 [1/(H/m)]."""
        return (1.0 / self.mu_r + 1.0) / mu_0

    @property
    def c_l(self):
        return 1.0 / math.sqrt(
            (self.epsilon_r + 1.0) / (1.0 / self.mu_r + 1.0) * epsilon_0 * mu_0
        )

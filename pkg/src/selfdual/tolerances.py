"""Default tolerances.

Grid tolerances scale with the mesh width h (first-order accuracy of
piecewise-linear interpolation); analytic paths are tied to float accuracy.
"""

TOL_CONVEX = 1e-9        # midpoint convexity slack, analytic forms
TOL_FY = 1e-8            # Fenchel-Young slack, analytic forms
TOL_PROX = 1e-10         # first-order residual of proximal solves
TOL_GAP = 1e-6           # selfdual gap certificate, analytic forms
TOL_GAP_GRID = 1e-3      # selfdual gap certificate, grid / pipeline forms
TOL_MONO = 1e-8          # monotonicity slack on sampled pairs
TOL_PSD = 1e-9           # smallest admissible eigenvalue of symmetric parts


def tol_grid(h):
    """Value tolerance for grid-backed quantities with mesh width h."""
    return 5.0 * h


def tol_fy_grid(h):
    return 5.0 * h


def tol_sd(h):
    """Selfdual residual tolerance at probe spacing h."""
    return max(1e-6, 5.0 * h)


def tol_field(grid=False):
    return 10.0 * (TOL_GAP_GRID if grid else TOL_GAP)


def tol_evolution(dt, scale=1.0):
    """Certificate tolerance for discrete path functionals."""
    return max(1e-6, 5.0 * dt * dt * scale)


def tol_pde(h, scale=1.0):
    """Certificate tolerance for discretized model problems."""
    return max(1e-6, 5.0 * h * h * scale)

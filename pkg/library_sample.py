"""
An example use of the SublinearDirichlet library
"""
import os
import logging
from dotenv import load_dotenv
load_dotenv()

from SublinearDirichlet import ( #pylint: disable=wrong-import-position
    BoundaryData,
    Direction,
    SolverConfig,
    build_domain,
    build_green,
    dist_alpha_measure,
    kato_modulus,
    measure_from_density,
    picard_solve,
    shape_from_name,
    verify_estimates,
)

logging.basicConfig(level=os.getenv("LOG_LEVEL", "INFO").upper())

q = float(os.getenv("SAMPLE_Q", "0.5"))
domain = build_domain(shape_from_name("disk"), float(os.getenv("SAMPLE_H", "0.0625")))
green = build_green(domain)

# a boundary weighted mu just inside the Kato class, Lebesgue nu and f = 1 + x^2 - y^2
mu = dist_alpha_measure(domain, 1.5, delta_floor=domain.h / 2)
nu = measure_from_density(domain, 1.0)
data = BoundaryData.from_expression(domain, "1 + x^2 - y^2")

kato = kato_modulus(green, mu, with_center_uniform=False)
print(f"Kato modulus slope {kato.slope.slope:.3f}, sup G[mu] = {kato.sup_norm:.4g}")

for direction in Direction:
    report = picard_solve(green, mu, nu, data, SolverConfig(q=q, direction=direction))
    margins = verify_estimates(report, green, mu, nu, data, q)
    print(f"from {direction.value}: {report.iterations} iterations, "
          f"sup u = {report.u.sup_norm():.6g}, " +
          ", ".join(f"{name} margin {m.margin:.3g}" for name, m in margins.items()))

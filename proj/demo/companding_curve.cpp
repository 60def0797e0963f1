// Prints the companding map w = a*arctan(v/b) and its slope for a few
// (a, b) pairs: small latents pass nearly unchanged, large ones are
// squeezed toward the bound a*pi/2.
#include <cstdio>
#include <numbers>

#include "compander/reparam.hpp"

using namespace compander;

int main() {
  const double vs[] = {0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 20.0, 1e6};
  const struct {
    double a, b;
  } pairs[] = {{1.0, 1.0}, {1.0, 0.6}, {0.7, 0.8}};

  for (const auto& pair : pairs) {
    ReparamParams p;
    p.a = pair.a;
    p.b = pair.b;
    std::printf("a=%.1f b=%.1f  bound a*pi/2 = %.6f\n", pair.a, pair.b,
                pair.a * std::numbers::pi / 2);
    std::printf("  %10s %12s %12s\n", "v", "psi(v)", "psi'(v)");
    for (double v : vs)
      std::printf("  %10.2g %12.6f %12.6f\n", v, psi(ReparamKind::Arctan, p, v),
                  psi_prime(ReparamKind::Arctan, p, v));
    std::printf("\n");
  }
  return 0;
}

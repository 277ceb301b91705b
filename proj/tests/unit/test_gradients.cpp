#include <doctest.h>

#include "grad_suite.hpp"

using namespace hykey::testing;

TEST_CASE("every differentiable op and loss term matches central differences") {
  for (const auto& c : gradient_suite()) {
    for (std::uint64_t seed = 100; seed < 103; ++seed) {
      auto inst = c.make(seed);
      const auto r = gradcheck(inst.f, inst.inputs, seed, 1e-2, 48, inst.differentiable);
      CAPTURE(c.name);
      CAPTURE(seed);
      CHECK(r.probes > 0);
      CHECK(r.analytic_norm > 0.0);
      CHECK(r.relative_error < 1e-3);
    }
  }
}

#include <iostream>

#include "external_sim.hpp"
#include "generators.hpp"
#include "mlrtl/emit.hpp"
#include "mlrtl/emulate.hpp"
#include "mlrtl/lower.hpp"

using namespace mlrtl;
using namespace mlrtl::testing;

int main() {
  if (std::getenv("MLRTL_IVERILOG") == nullptr) {
    std::cout << "MLRTL_IVERILOG not set, skipping\n";
    return 77;
  }
  Rng rng(71);
  int failures = 0;
  for (int it = 0; it < 6; ++it) {
    auto d = random_dataset(rng, 3, 16, 3);
    Model m = it % 2 ? Model{random_bdt(rng, 3, 1 + it % 3, 4, 3)}
                     : Model{random_fcnn(rng, {3, 5, 2}, {Activation::Sigmoid, Activation::Linear})};
    auto q = quantize_for(m, d, 10);
    auto n = lower(q, LowerOptions{it % 2 ? 1 : 1 + it % 3, "dut_" + std::to_string(it)});
    std::vector<std::vector<FixedPointValue>> xs, ys;
    for (std::size_t i = 0; i < d.rows(); ++i) {
      xs.push_back(quantize_input(d.row(i), input_format(q)));
      ys.push_back(infer_fixed(q, xs.back()).values);
    }
    auto r = run_external_sim(n.name, emit_verilog(n), emit_testbench(n, xs, ys));
    std::cout << n.name << ": " << (r->passed ? "PASS" : "FAIL") << "\n";
    if (!r->passed) {
      std::cout << r->log;
      ++failures;
    }
  }
  return failures == 0 ? 0 : 1;
}

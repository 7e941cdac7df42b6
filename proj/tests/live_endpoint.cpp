// Integration run against a real model server. Set MASKCTRL_LIVE_ENDPOINT
// (and MASKCTRL_AUTH_TOKEN if the server needs one); otherwise exits 77,
// which ctest reports as skipped.

#include <cstdio>
#include <cstdlib>
#include <iostream>

#include "maskctrl/experiments.hpp"

using namespace maskctrl;
namespace ex = maskctrl::experiments;

int main() {
  const char* url = std::getenv("MASKCTRL_LIVE_ENDPOINT");
  if (!url || !*url) {
    std::puts("MASKCTRL_LIVE_ENDPOINT not set; skipping");
    return 77;
  }
  try {
    auto c = ex::ExperimentConfig::defaults(ex::Kind::protein);
    c.backend.type = ex::BackendSpec::Type::remote;
    c.backend.endpoint.base_url = url;
    c.backend.endpoint = c.backend.endpoint.with_env_token();
    c.preset = "helix";
    const auto rep = ex::run_protein(c);
    double helix = 0.0;
    for (const auto& s : rep.samples) helix += s.helix;
    helix /= static_cast<double>(rep.samples.size());
    std::printf("%zu sequences, helix%% mean %.3f, invariant failures %zu\n", rep.samples.size(),
                helix, rep.invariant_failures);
    return rep.invariant_failures == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "live endpoint run failed: " << e.what() << '\n';
    return 1;
  }
}

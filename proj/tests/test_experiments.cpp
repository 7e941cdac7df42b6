#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "maskctrl/errors.hpp"
#include "maskctrl/experiments.hpp"
#include "maskctrl/protein_metrics.hpp"

using namespace maskctrl;
using namespace maskctrl::experiments;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("maskctrl-test-" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string without_generated_line(const std::string& text) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line))
    if (line.rfind("# generated:", 0) != 0) out += line + '\n';
  return out;
}

ExperimentConfig small_toy() {
  auto c = ExperimentConfig::from_json(R"({"grids":{"K":[5,50],"T":[2,10]},"runs":20,"seed":3})",
                                       Kind::toy);
  return c;
}

}  // namespace

TEST_CASE("default grids") {
  const auto toy = ExperimentConfig::defaults(Kind::toy);
  CHECK(toy.k_grid == std::vector<std::size_t>{10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10000});
  CHECK(toy.t_grid == std::vector<std::size_t>{2, 5, 8, 10});
  CHECK(toy.length == 10);
  CHECK(toy.vocab_size == 10);
  CHECK_NOTHROW(toy.validate());

  const auto sweep = ExperimentConfig::defaults(Kind::sweep);
  CHECK(sweep.w1_grid.size() == 9);
  CHECK(sweep.a1_grid.size() == 10);
  CHECK(sweep.w1_grid.front() == 10.0);
  CHECK(sweep.w1_grid.back() == 50.0);
  CHECK(sweep.a1_grid.front() == doctest::Approx(0.5));
  CHECK(sweep.a1_grid.back() == doctest::Approx(1.4));

  const auto inpaint = ExperimentConfig::defaults(Kind::inpaint);
  CHECK(inpaint.length == 100);
  CHECK(inpaint.prompt == "RGRLIGYDIHLNVVLADAEMIQDGEVVKRYGKIVI");
  CHECK(inpaint.prompt_offset == 24);
  CHECK(ExperimentConfig::defaults(Kind::protein).length == 50);
}

TEST_CASE("config parsing") {
  const auto c = ExperimentConfig::from_json(
      R"({"kind":"protein","preset":"low_gravy","sampler":{"steps":4,"samples":30},
          "backend":{"type":"mock","seed":9},"runs":3})");
  CHECK(c.kind == Kind::protein);
  CHECK(c.preset == "low_gravy");
  CHECK(c.sampler.steps == 4);
  CHECK(c.sampler.samples == 30);
  CHECK(c.backend.seed == 9);
  CHECK(c.runs == 3);

  const auto r = ExperimentConfig::from_json(R"({"backend":{"url":"http://localhost:9"}})", Kind::protein);
  CHECK(r.backend.type == BackendSpec::Type::remote);

  CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"typo":1})", Kind::toy), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"sampler":{"stepz":1}})", Kind::toy), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"backend":{"kind":"x"}})", Kind::toy), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"runs":"ten"})", Kind::toy), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json("[1,2", Kind::toy), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"kind":"toy"})", Kind::sweep), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json("{}"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"preset":"sticky"})", Kind::protein), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"grids":{"K":[0]}})", Kind::toy), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"length":12})", Kind::toy), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"prompt":{"offset":90}})", Kind::inpaint),
                  ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"prompt":{"residues":"AXB"}})", Kind::inpaint),
                  ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"sampler":{"schedule":"zigzag"}})", Kind::toy),
                  ConfigError);
}

TEST_CASE("protein presets") {
  CHECK(protein_preset("uncontrolled").constraints.empty());
  const auto helix = protein_preset("helix");
  REQUIRE(helix.constraints.size() == 2);
  bool saw_helix = false;
  for (const auto& c : helix.constraints) {
    if (c.metric == "helix_pct") {
      saw_helix = true;
      CHECK(c.interval.lo == 0.8);
      CHECK(c.weight == 50.0);
    } else {
      CHECK(c.metric == "instability");
      CHECK(c.interval.hi == 40.0);
      CHECK(c.weight == 5.0);
      CHECK(c.exponent == 2.0);
    }
  }
  CHECK(saw_helix);
}

TEST_CASE("toy sweep is reproducible and independent of worker count") {
  auto a = small_toy();
  a.out_dir = scratch("toy-a");
  a.workers = 1;
  auto b = a;
  b.out_dir = scratch("toy-b");
  b.workers = 3;
  std::ostringstream log;
  CHECK(run(a, log) == 0);
  CHECK(run(b, log) == 0);
  for (const char* f : {"results.csv", "samples.txt"}) {
    CAPTURE(f);
    const auto ta = slurp(a.out_dir / f);
    CHECK_FALSE(ta.empty());
    CHECK(without_generated_line(ta) == without_generated_line(slurp(b.out_dir / f)));
  }
  CHECK(fs::exists(a.out_dir / "timings.csv"));
  CHECK(slurp(a.out_dir / "results.csv").find("# generated:") != std::string::npos);

  const auto rep = run_toy_sweep(a);
  REQUIRE(rep.cells.size() == 4);
  CHECK(rep.cells[0].samples == 5);
  CHECK(rep.cells[0].steps == 2);
  CHECK(rep.cells[3].samples == 50);
  CHECK(rep.cells[3].steps == 10);
  for (const auto& c : rep.cells) {
    CHECK(c.runs == 20);
    CHECK(c.invariant_failures == 0);
    CHECK(c.rate == doctest::Approx(static_cast<double>(c.satisfied) / 20));
  }
  CHECK(rep.cells[3].queries_per_chain == 8.0);
  CHECK(rep.oracle_fraction == doctest::Approx(0.010747));

  auto other = a;
  other.sampler.seed = 4;
  other.out_dir.clear();
  const auto rep2 = run_toy_sweep(other);
  bool differs = false;
  for (std::size_t i = 0; i < 4; ++i) differs |= rep2.cells[i].mean_abs_phi != rep.cells[i].mean_abs_phi;
  CHECK(differs);
}

TEST_CASE("protein generation on the mock backend") {
  auto c = ExperimentConfig::from_json(R"({"runs":4,"sampler":{"samples":50}})", Kind::protein);
  c.out_dir = scratch("protein");
  std::ostringstream log;
  CHECK(run(c, log) == 0);
  const auto rep = run_protein(c);
  REQUIRE(rep.samples.size() == 4);
  CHECK(rep.invariant_failures == 0);
  for (const auto& s : rep.samples) {
    CHECK(s.sequence.size() == 50);
    const protein::AminoAcidSequence seq(s.sequence);
    CHECK(s.gravy == doctest::Approx(protein::gravy(seq)));
    CHECK(s.instability == doctest::Approx(protein::instability_index(seq)));
    CHECK(s.model_queries > 0);
    CHECK(s.model_queries <= 10);
  }
  const auto csv = slurp(c.out_dir / "results.csv");
  CHECK(csv.find("index,sequence,gravy,instability,helix,turn,sheet,stable,log_reward") !=
        std::string::npos);
  CHECK(fs::exists(c.out_dir / "trace.jsonl"));
  CHECK(fs::exists(c.out_dir / "samples.txt"));
}

TEST_CASE("inpainting keeps the prompt") {
  auto c = ExperimentConfig::from_json(R"({"runs":3,"sampler":{"samples":40}})", Kind::inpaint);
  const auto rep = run_inpaint(c);
  REQUIRE(rep.samples.size() == 3);
  CHECK(rep.invariant_failures == 0);
  for (const auto& s : rep.samples) {
    CHECK(s.sequence.size() == 100);
    CHECK(s.sequence.substr(24, c.prompt.size()) == c.prompt);
  }
}

TEST_CASE("hyperparameter sweep shape") {
  auto c = ExperimentConfig::from_json(
      R"({"runs":2,"sampler":{"samples":20,"steps":3},"grids":{"w1":[10,50],"a1":[0.5,0.9,1.4]}})",
      Kind::sweep);
  c.out_dir = scratch("sweep");
  const auto rep = run_hparam_sweep(c);
  REQUIRE(rep.cells.size() == 6);
  CHECK(rep.cells[0].w1 == 10.0);
  CHECK(rep.cells[0].a1 == 0.5);
  CHECK(rep.cells[5].w1 == 50.0);
  CHECK(rep.cells[5].a1 == 1.4);
  for (const auto& cell : rep.cells) {
    CHECK(cell.sequences == 2);
    CHECK(cell.invariant_failures == 0);
    CHECK(cell.helix_std >= 0.0);
  }
  std::ostringstream log;
  CHECK(run(c, log) == 0);
  const auto csv = slurp(c.out_dir / "results.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') >= 7);
}

TEST_CASE("oracle suite at small size") {
  auto c = ExperimentConfig::from_json(
      R"({"runs":400,"sampler":{"samples":200},"oracle":{"vocab_sizes":[10,4]}})", Kind::oracle);
  c.out_dir = scratch("oracle");
  const auto rep = run_oracle_suite(c);
  REQUIRE(rep.checks.size() == 4);
  CHECK(rep.checks[0].name == "cardinality_N10");
  CHECK(rep.checks[0].passed);
  CHECK(rep.checks[0].detail.find("1.07%") != std::string::npos);
  CHECK(rep.checks[1].passed);  // no published value to compare with
  CHECK(rep.checks[2].name.rfind("tv_", 0) == 0);
  const auto card = slurp(c.out_dir / "cardinality.csv");
  CHECK(card.find("10,107467136,10000000000,") != std::string::npos);
  CHECK(fs::exists(c.out_dir / "tv.csv"));
}

TEST_CASE("chain audit catches tampering") {
  const auto model = make_backend(BackendSpec{BackendSpec::Type::uniform, 0, 1.0, {}}, 10, 10);
  SamplerConfig sc;
  sc.samples = 5;
  Rng rng(1);
  auto r = sample(*model, equality_reward(5, 10), sc, rng);
  CHECK(audit_chain(r, sc, 10, 10).empty());
  auto bad = r;
  bad.sequence[0] = 10;
  CHECK_FALSE(audit_chain(bad, sc, 10, 10).empty());
  bad = r;
  bad.trace.model_queries += 1;
  CHECK_FALSE(audit_chain(bad, sc, 10, 10).empty());
  bad = r;
  bad.trace.steps[3].masked_count += 1;
  CHECK_FALSE(audit_chain(bad, sc, 10, 10).empty());
  const InpaintPrompt prompt{IndexSet({0}, 10), {static_cast<Token>((r.sequence[0] + 1) % 10)}};
  CHECK_FALSE(audit_chain(r, sc, 10, 10, &prompt).empty());
}

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <memory>

#include "maskctrl/errors.hpp"
#include "maskctrl/experiments.hpp"
#include "maskctrl/models.hpp"
#include "maskctrl/oracle.hpp"
#include "maskctrl/protein_metrics.hpp"
#include "maskctrl/rewards.hpp"
#include "maskctrl/sampler.hpp"

namespace py = pybind11;
using namespace maskctrl;

namespace {

// Python objects captured by C++ callbacks may be released on a thread that
// does not hold the GIL.
std::shared_ptr<py::object> hold(py::object obj) {
  return std::shared_ptr<py::object>(new py::object(std::move(obj)), [](py::object* p) {
    py::gil_scoped_acquire gil;
    delete p;
  });
}

py::array_t<Token> as_array(std::span<const Token> x) {
  py::array_t<Token> a(static_cast<py::ssize_t>(x.size()));
  std::copy(x.begin(), x.end(), a.mutable_data());
  return a;
}

// Wraps f(tokens) -> [D, N] (or wider, extra columns are dropped) as a model.
class CallableModel final : public MaskedModel {
 public:
  CallableModel(py::object fn, std::size_t length, std::size_t vocab_size)
      : fn_(hold(std::move(fn))), length_(length), vocab_(vocab_size) {}
  std::size_t length() const override { return length_; }
  std::size_t vocab_size() const override { return vocab_; }

  ConditionalMarginals predict(const MaskedSequence& x) const override {
    check_input(x);
    auto m = ConditionalMarginals::skeleton(x);
    py::gil_scoped_acquire gil;
    auto out = py::array_t<double, py::array::c_style | py::array::forcecast>(
        (*fn_)(as_array(x.tokens())));
    if (out.ndim() != 2 || static_cast<std::size_t>(out.shape(0)) != length_ ||
        static_cast<std::size_t>(out.shape(1)) < vocab_)
      throw ValidationError("model callable must return an array of shape (D, >=N)");
    const auto width = static_cast<std::size_t>(out.shape(1));
    const double* p = out.data();
    for (std::size_t d = 0; d < length_; ++d) {
      if (!x.is_masked(d)) continue;
      double kept = 0.0;
      for (std::size_t n = 0; n < vocab_; ++n) kept += p[d * width + n];
      if (!(kept > 0.0) || !std::isfinite(kept))
        throw ValidationError("model callable returned a row with no valid mass");
      auto row = m.row(d);
      for (std::size_t n = 0; n < vocab_; ++n) row[n] = p[d * width + n] / kept;
    }
    m.validate();
    return m;
  }

 private:
  std::shared_ptr<py::object> fn_;
  std::size_t length_;
  std::size_t vocab_;
};

Reward python_reward(py::object fn, bool log_space, std::string name) {
  auto f = hold(std::move(fn));
  return Reward(
      [f, log_space](std::span<const Token> x) {
        py::gil_scoped_acquire gil;
        const double v = (*f)(as_array(x)).cast<double>();
        if (log_space) return v;
        if (v < 0.0 || std::isnan(v)) throw std::domain_error("reward must be >= 0");
        return v == 0.0 ? -std::numeric_limits<double>::infinity() : std::log(v);
      },
      std::move(name));
}

SamplerConfig make_config(std::size_t steps, std::size_t samples, std::uint64_t seed,
                          const std::string& schedule, const std::string& remask,
                          double weight_floor, bool skip_stalled_steps) {
  SamplerConfig c;
  c.steps = steps;
  c.samples = samples;
  c.seed = seed;
  if (schedule == "cosine")
    c.schedule = cosine_schedule;
  else if (schedule == "linear")
    c.schedule = linear_schedule;
  else
    throw ConfigError("unknown schedule '" + schedule + "'");
  if (remask == "uniform")
    c.remask = RemaskStrategy::uniform;
  else if (remask == "low_confidence")
    c.remask = RemaskStrategy::low_confidence;
  else
    throw ConfigError("unknown remask strategy '" + remask + "'");
  c.weight_floor = weight_floor;
  c.skip_stalled_steps = skip_stalled_steps;
  return c;
}

py::dict result_dict(const SampleResult& r) {
  py::list steps;
  for (const auto& s : r.trace.steps) {
    py::dict d;
    d["t"] = s.t;
    d["skipped"] = s.skipped;
    d["masked_count"] = s.masked_count;
    d["selected"] = s.selected;
    d["ess"] = s.ess;
    d["log_reward_of_selected"] = s.log_reward_of_selected;
    d["model_queries"] = s.model_queries;
    d["observed"] = std::vector<std::size_t>(s.observed.begin(), s.observed.end());
    steps.append(std::move(d));
  }
  py::dict out;
  out["sequence"] = as_array(r.sequence);
  out["model_queries"] = r.trace.model_queries;
  out["reward_evals"] = r.trace.reward_evals;
  out["steps"] = steps;
  return out;
}

py::int_ big_int(oracle::Count c) {
  return py::int_(py::str(oracle::to_string(c)));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Controllable generation with discrete masked models";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<TransportError>(m, "TransportError", base.ptr());
  py::register_exception<ProtocolError>(m, "ProtocolError", base.ptr());
  py::register_exception<BackendError>(m, "BackendError", base.ptr());

  py::class_<MaskedModel>(m, "MaskedModel")
      .def_property_readonly("length", &MaskedModel::length)
      .def_property_readonly("vocab_size", &MaskedModel::vocab_size)
      .def(
          "predict",
          [](const MaskedModel& self, const std::vector<Token>& x) {
            const auto p = self.predict(MaskedSequence(x, self.vocab_size()));
            py::array_t<double> a({p.length(), p.vocab_size()});
            std::copy(p.data().begin(), p.data().end(), a.mutable_data());
            return a;
          },
          py::arg("tokens"), "Marginals [D, N]; the mask token is N.");

  py::class_<UniformModel, MaskedModel>(m, "UniformModel")
      .def(py::init<std::size_t, std::size_t>(), py::arg("length"), py::arg("vocab_size"));

  py::class_<ProductModel, MaskedModel>(m, "ProductModel")
      .def(py::init([](py::array_t<double, py::array::c_style | py::array::forcecast> probs) {
             if (probs.ndim() != 2) throw std::invalid_argument("probs must be [D, N]");
             return ProductModel(static_cast<std::size_t>(probs.shape(0)),
                                 static_cast<std::size_t>(probs.shape(1)),
                                 std::vector<double>(probs.data(), probs.data() + probs.size()));
           }),
           py::arg("probs"))
      .def_static("random", &ProductModel::random, py::arg("length"), py::arg("vocab_size"),
                  py::arg("seed") = 0, py::arg("sharpness") = 1.0);

  py::class_<JointTable>(m, "JointTable")
      .def(py::init([](std::size_t length, std::size_t vocab,
                       py::array_t<double, py::array::c_style | py::array::forcecast> pmf) {
             return JointTable(length, vocab,
                               std::vector<double>(pmf.data(), pmf.data() + pmf.size()));
           }),
           py::arg("length"), py::arg("vocab_size"), py::arg("pmf"))
      .def_static("uniform", [](std::size_t D, std::size_t N) { return JointTable::uniform(D, N); })
      .def_static("from_json", [](const std::string& s) { return JointTable::from_json(s); })
      .def("to_json", &JointTable::to_json)
      .def_property_readonly("length", &JointTable::length)
      .def_property_readonly("vocab_size", &JointTable::vocab_size)
      .def("prob", [](const JointTable& t, const std::vector<Token>& x) { return t.prob(x); })
      .def("pmf", [](const JointTable& t) {
        py::array_t<double> a(static_cast<py::ssize_t>(t.states()));
        std::copy(t.pmf().begin(), t.pmf().end(), a.mutable_data());
        return a;
      });

  py::class_<TableModel, MaskedModel>(m, "TableModel")
      .def(py::init<JointTable>(), py::arg("table"));

  py::class_<CallableModel, MaskedModel>(m, "CallableModel")
      .def(py::init<py::object, std::size_t, std::size_t>(), py::arg("fn"), py::arg("length"),
           py::arg("vocab_size"),
           "Model from fn(tokens) -> probabilities [D, >=N]; columns past N are dropped and "
           "masked rows renormalised.");

  m.def(
      "exact_conditional",
      [](const JointTable& t, const std::vector<Token>& x, std::size_t d, Token n) {
        return exact_conditional(t, MaskedSequence(x, t.vocab_size()), d, n);
      },
      py::arg("table"), py::arg("tokens"), py::arg("position"), py::arg("token"));

  py::class_<Reward>(m, "Reward")
      .def("__call__", [](const Reward& r, const std::vector<Token>& x) { return r(x); })
      .def("log", [](const Reward& r, const std::vector<Token>& x) { return r.log(x); })
      .def("scaled", &Reward::scaled, py::arg("c"))
      .def_property_readonly("name", &Reward::name);

  m.def("equality_reward", &equality_reward, py::arg("weight") = 5.0, py::arg("truncation") = 10.0,
        py::arg("value_offset") = 0);
  m.def("constant_reward", &constant_reward, py::arg("c") = 1.0);
  m.def(
      "custom_reward",
      [](py::object fn, std::string name) { return python_reward(std::move(fn), false, name); },
      py::arg("fn"), py::arg("name") = "custom", "Reward from fn(tokens) -> r >= 0.");
  m.def(
      "log_reward",
      [](py::object fn, std::string name) { return python_reward(std::move(fn), true, name); },
      py::arg("fn"), py::arg("name") = "log_custom", "Reward from fn(tokens) -> log r.");
  m.def(
      "reward_from_json",
      [](const std::string& text) {
        return RewardSpec::from_json(text).build(protein::metric_registry());
      },
      py::arg("text"), "Composite or equality reward from a reward spec document.");
  m.def(
      "protein_preset",
      [](const std::string& name) {
        return experiments::protein_preset(name).build(protein::metric_registry());
      },
      py::arg("name"));
  m.def("phi", [](const std::vector<Token>& x) { return phi(x); }, py::arg("values"));

  m.def(
      "sample",
      [](const MaskedModel& model, const Reward& reward, std::size_t steps, std::size_t samples,
         std::uint64_t seed, std::size_t chains, const std::string& schedule,
         const std::string& remask, double weight_floor, bool skip_stalled_steps,
         std::optional<std::vector<std::size_t>> prompt_positions,
         std::optional<std::vector<Token>> prompt_values) {
        const auto config = make_config(steps, samples, seed, schedule, remask, weight_floor,
                                        skip_stalled_steps);
        std::optional<InpaintPrompt> prompt;
        if (prompt_positions || prompt_values) {
          if (!prompt_positions || !prompt_values)
            throw ConfigError("prompt positions and values go together");
          prompt = InpaintPrompt{IndexSet::from_unsorted(*prompt_positions, model.length()),
                                 *prompt_values};
          if (prompt->values.size() != prompt->positions.size())
            throw ConfigError("prompt positions and values differ in length");
          // Values follow the caller's order; IndexSet sorts the positions.
          std::vector<std::pair<std::size_t, Token>> pv;
          for (std::size_t i = 0; i < prompt_positions->size(); ++i)
            pv.emplace_back((*prompt_positions)[i], (*prompt_values)[i]);
          std::sort(pv.begin(), pv.end());
          for (std::size_t i = 0; i < pv.size(); ++i) prompt->values[i] = pv[i].second;
        }
        std::vector<SampleResult> rs;
        {
          py::gil_scoped_release release;
          rs = sample_batch(model, reward, config, chains, prompt ? &*prompt : nullptr);
        }
        py::list out;
        for (const auto& r : rs) out.append(result_dict(r));
        return out;
      },
      py::arg("model"), py::arg("reward"), py::arg("steps") = 10, py::arg("samples") = 1000,
      py::arg("seed") = 0, py::arg("chains") = 1, py::arg("schedule") = "cosine",
      py::arg("remask") = "uniform", py::arg("weight_floor") = 1e-10,
      py::arg("skip_stalled_steps") = true, py::arg("prompt_positions") = py::none(),
      py::arg("prompt_values") = py::none(),
      "Runs `chains` chains in lockstep. Chain b is seeded with seed ^ b.");

  m.def("remask_count", [](std::size_t t, std::size_t T, std::size_t d) {
    return remask_count(t, T, d);
  });
  m.def("cosine_schedule", &cosine_schedule);

  m.def("gravy", [](const std::string& s) { return protein::gravy(protein::AminoAcidSequence(s)); });
  m.def("instability_index",
        [](const std::string& s) { return protein::instability_index(protein::AminoAcidSequence(s)); });
  m.def(
      "secondary_structure_fractions",
      [](const std::string& s, const std::string& classes) {
        const auto c = classes == "legacy" ? protein::ResidueClasses::legacy
                                           : protein::ResidueClasses::current;
        if (classes != "legacy" && classes != "current")
          throw ConfigError("classes must be 'current' or 'legacy'");
        const auto f = protein::secondary_structure_fractions(protein::AminoAcidSequence(s), c);
        return py::make_tuple(f.helix, f.turn, f.sheet);
      },
      py::arg("sequence"), py::arg("classes") = "current");
  m.def("amino_acids", [] { return std::string(protein::kAlphabet); });

  m.def(
      "phi_zero_count",
      [](std::size_t N, int value_offset) {
        const auto pmf = oracle::phi_distribution_dp(N, value_offset);
        return py::make_tuple(big_int(pmf.count(0)), big_int(pmf.total));
      },
      py::arg("vocab_size"), py::arg("value_offset") = 0,
      "(#{x : phi(x) = 0}, N^10) computed exactly.");
  m.def(
      "exact_posterior",
      [](const JointTable& t, const Reward& r) {
        const auto q = oracle::exact_posterior(t, r);
        py::array_t<double> a(static_cast<py::ssize_t>(q.q.size()));
        std::copy(q.q.begin(), q.q.end(), a.mutable_data());
        return py::make_tuple(a, q.log_z);
      },
      py::arg("table"), py::arg("reward"));
  m.def("total_variation", [](const std::vector<double>& p, const std::vector<double>& q) {
    return oracle::total_variation(p, q);
  });
}

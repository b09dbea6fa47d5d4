// Python module `dlpo`: thin wrappers over the core library. Vectors cross as
// Python lists; errors map to the exception classes registered below.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "dlpo/checkpoint.hpp"
#include "dlpo/commands.hpp"
#include "dlpo/config.hpp"
#include "dlpo/diffusion.hpp"
#include "dlpo/errors.hpp"
#include "dlpo/policy.hpp"
#include "dlpo/rewards.hpp"
#include "dlpo/trainer.hpp"

namespace py = pybind11;

namespace dlpo {
namespace {

// A parsed config together with the model, schedule and scorer it implies.
class Lab {
 public:
  explicit Lab(const std::string& config_text)
      : cfg_(parse_config(config_text)), exp_(make_experiment(cfg_)) {}

  const RunConfig& config() const { return cfg_; }
  const Experiment& experiment() const { return exp_; }

  std::size_t param_count() const { return exp_.net.layout().total; }
  std::vector<double> init(std::uint64_t seed) const { return exp_.net.init(seed); }

  std::vector<double> predict_eps(const std::vector<double>& params,
                                  const std::vector<double>& x_t, int c, int t) const {
    return exp_.net.predict_eps(params, x_t, c, t);
  }

  py::dict sample(const std::vector<double>& params, int c, std::uint64_t seed) const {
    Rng rng(seed);
    const Trajectory traj = sample_trajectory(exp_.net, params, c, exp_.sched, rng);
    py::dict out;
    out["c"] = traj.c;
    out["states"] = traj.states;
    out["logp"] = traj.logp;
    out["x0"] = traj.x0();
    const Scores s = score(exp_, traj);
    out["reward_mos"] = s.reward_mos;
    out["heldout"] = s.heldout;
    out["recovered"] = s.recovered;
    return out;
  }

  double reward_mos(const std::vector<double>& x0, int c) const {
    return dlpo::reward_mos(x0, c, exp_.spec, exp_.weights);
  }
  double reward_heldout(const std::vector<double>& x0, int c) const {
    return dlpo::reward_heldout(x0, c, exp_.spec, exp_.weights);
  }
  int recover(const std::vector<double>& x0) const {
    return condition_recovery(x0, exp_.spec);
  }
  std::vector<double> clean_waveform(int c, double phase) const {
    return dlpo::clean_waveform(exp_.spec, c, phase);
  }

  py::dict evaluate(const std::vector<double>& params, std::size_t n_per_condition,
                    std::uint64_t seed) const {
    const std::vector<int> classes = all_classes(exp_);
    MetricsRow row;
    {
      py::gil_scoped_release release;
      row = dlpo::evaluate(exp_, params, classes, n_per_condition, seed);
    }
    return row_dict(row);
  }

  py::dict pretrain(std::optional<std::vector<double>> init_params) const {
    std::vector<double> init = init_params ? *init_params : exp_.net.init(cfg_.seed);
    PretrainResult res;
    {
      py::gil_scoped_release release;
      const std::vector<LabeledWave> data = make_training_set(exp_, cfg_);
      res = dlpo::pretrain(exp_, make_pretrain_config(cfg_), data, std::move(init));
    }
    py::list losses;
    for (const MetricsRow& row : res.log) losses.append(row.diff_loss);
    py::dict out;
    out["params"] = res.state.params;
    out["losses"] = losses;
    return out;
  }

  void save(const std::filesystem::path& path, const std::vector<double>& params) const {
    save_checkpoint(path, params, make_meta(cfg_));
  }
  std::vector<double> load(const std::filesystem::path& path) const {
    return load_checkpoint(path, param_count());
  }

  static py::dict row_dict(const MetricsRow& row) {
    py::dict out;
    out["reward_mos"] = row.reward_mos;
    out["heldout"] = row.heldout;
    out["recovery_err"] = row.recovery_err;
    out["diff_loss"] = row.diff_loss;
    return out;
  }

 private:
  RunConfig cfg_;
  Experiment exp_;
};

// Runs one CLI command in-process; returns (exit code, log text, error text).
py::tuple run_command(const std::string& command, std::optional<std::filesystem::path> config,
                      std::optional<std::filesystem::path> ckpt,
                      std::optional<std::string> algo, std::filesystem::path out,
                      std::optional<std::uint64_t> seed) {
  CommandOptions opts;
  opts.config = std::move(config);
  if (ckpt) opts.ckpt = *ckpt;
  opts.algo = std::move(algo);
  opts.out = std::move(out);
  opts.seed = seed;
  std::ostringstream log, err;
  int code = kExitFailure;
  {
    py::gil_scoped_release release;
    if (command == "pretrain") {
      code = cmd_pretrain(opts, log, err);
    } else if (command == "finetune") {
      code = cmd_finetune(opts, log, err);
    } else if (command == "eval") {
      code = cmd_eval(opts, log, err);
    } else if (command == "compare") {
      code = cmd_compare(opts, log, err);
    } else {
      code = kExitConfig;
      err << "error: unknown command '" << command << "'\n";
    }
  }
  return py::make_tuple(code, log.str(), err.str());
}

}  // namespace
}  // namespace dlpo

PYBIND11_MODULE(dlpo, m) {
  using namespace dlpo;
  m.doc() = "Diffusion-model RL fine-tuning on a synthetic waveform task.";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  py::class_<Schedule>(m, "Schedule")
      .def_readonly("steps", &Schedule::steps)
      .def_readonly("sigma2_min", &Schedule::sigma2_min)
      .def_readonly("beta", &Schedule::beta)
      .def_readonly("alpha", &Schedule::alpha)
      .def_readonly("alpha_bar", &Schedule::alpha_bar)
      .def_readonly("sigma2", &Schedule::sigma2);
  m.def("make_schedule", &make_schedule, py::arg("steps"), py::arg("beta_start"),
        py::arg("beta_end"), py::arg("sigma2_min") = 1e-6);
  m.def("q_sample",
        [](const std::vector<double>& x0, int t, const std::vector<double>& eps,
           const Schedule& s) { return q_sample(x0, t, eps, s); },
        py::arg("x0"), py::arg("t"), py::arg("eps"), py::arg("schedule"));
  m.def("implied_noise",
        [](const std::vector<double>& x_t, const std::vector<double>& x0, int t,
           const Schedule& s) { return implied_noise(x_t, x0, t, s); },
        py::arg("x_t"), py::arg("x0"), py::arg("t"), py::arg("schedule"));
  m.def("logprob_step",
        [](const std::vector<double>& mu, double sigma2, const std::vector<double>& x) {
          return logprob_step(mu, sigma2, x);
        },
        py::arg("mu"), py::arg("sigma2"), py::arg("x"));
  m.def("kl_step",
        [](const std::vector<double>& a, const std::vector<double>& b, double sigma2) {
          return kl_step(a, b, sigma2);
        },
        py::arg("mu_a"), py::arg("mu_b"), py::arg("sigma2"));

  m.def("canonical_config", [](const std::string& text) { return canonical_config(parse_config(text)); },
        py::arg("text") = "");
  m.def("config_hash", [](const std::string& text) { return config_hash(parse_config(text)); },
        py::arg("text") = "");
  m.def("describe_config_keys", &describe_config_keys);
  m.def("metrics_header", &metrics_header);

  py::class_<Lab>(m, "Lab")
      .def(py::init<const std::string&>(), py::arg("config_text") = "")
      .def_property_readonly("param_count", &Lab::param_count)
      .def_property_readonly("schedule", [](const Lab& lab) { return lab.experiment().sched; })
      .def_property_readonly("n", [](const Lab& lab) { return lab.experiment().spec.n; })
      .def_property_readonly("k", [](const Lab& lab) { return lab.experiment().spec.k(); })
      .def("init", &Lab::init, py::arg("seed"))
      .def("predict_eps", &Lab::predict_eps, py::arg("params"), py::arg("x_t"), py::arg("c"),
           py::arg("t"))
      .def("sample", &Lab::sample, py::arg("params"), py::arg("c"), py::arg("seed"))
      .def("reward_mos", &Lab::reward_mos, py::arg("x0"), py::arg("c"))
      .def("reward_heldout", &Lab::reward_heldout, py::arg("x0"), py::arg("c"))
      .def("recover", &Lab::recover, py::arg("x0"))
      .def("clean_waveform", &Lab::clean_waveform, py::arg("c"), py::arg("phase") = 0.0)
      .def("evaluate", &Lab::evaluate, py::arg("params"), py::arg("n_per_condition"),
           py::arg("seed"))
      .def("pretrain", &Lab::pretrain, py::arg("init") = py::none())
      .def("save", &Lab::save, py::arg("path"), py::arg("params"))
      .def("load", &Lab::load, py::arg("path"));

  m.def("run_command", &run_command, py::arg("command"), py::arg("config") = py::none(),
        py::arg("ckpt") = py::none(), py::arg("algo") = py::none(), py::arg("out") = ".",
        py::arg("seed") = py::none());

  m.attr("EXIT_OK") = kExitOk;
  m.attr("EXIT_FAILURE") = kExitFailure;
  m.attr("EXIT_CONFIG") = kExitConfig;
  m.attr("EXIT_IO") = kExitIo;
  m.attr("EXIT_CORRUPT") = kExitCorrupt;
}

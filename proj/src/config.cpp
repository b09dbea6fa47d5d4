#include "dlpo/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "dlpo/errors.hpp"

namespace dlpo {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(std::string_view text, std::string_view kind) {
  T value{};
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  if (res.ec != std::errc() || res.ptr != end || text.empty()) {
    throw ConfigError("expected " + std::string(kind) + ", got '" +
                      std::string(text) + "'");
  }
  return value;
}

double parse_real(std::string_view text) {
  const double v = parse_number<double>(text, "a real number");
  if (!std::isfinite(v)) throw ConfigError("value must be finite");
  return v;
}

std::size_t parse_count(std::string_view text) {
  if (!text.empty() && text.front() == '-') {
    throw ConfigError("expected a non-negative integer, got '" + std::string(text) + "'");
  }
  return parse_number<std::size_t>(text, "a non-negative integer");
}

// Range predicates for real-valued keys.
struct Range {
  double lo;
  double hi;
  bool lo_open;
  bool hi_open;

  bool contains(double v) const {
    const bool above = lo_open ? v > lo : v >= lo;
    const bool below = hi_open ? v < hi : v <= hi;
    return above && below;
  }
  std::string describe() const {
    return std::string(lo_open ? "(" : "[") + format_double(lo) + ", " +
           (std::isinf(hi) ? "inf" : format_double(hi)) + (hi_open ? ")" : "]");
  }
};

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr Range kUnitOpen{0.0, 1.0, true, true};
constexpr Range kUnitHalfOpen{0.0, 1.0, false, true};
constexpr Range kPositive{0.0, kInf, true, true};
constexpr Range kNonNegative{0.0, kInf, false, true};

template <typename Access>
ConfigKey real_key(std::string_view name, std::string_view help, Range range,
                   Access access) {
  return {name, help,
          [range, access](RunConfig& c, std::string_view v) {
            const double x = parse_real(v);
            if (!range.contains(x)) {
              throw ConfigError("value " + std::string(v) + " outside " + range.describe());
            }
            access(c) = x;
          },
          [access](const RunConfig& c) { return format_double(access(c)); }};
}

template <typename Access>
ConfigKey count_key(std::string_view name, std::string_view help, std::size_t min,
                    Access access) {
  return {name, help,
          [min, access](RunConfig& c, std::string_view v) {
            const std::size_t x = parse_count(v);
            if (x < min) {
              throw ConfigError("value must be >= " + std::to_string(min));
            }
            access(c) = x;
          },
          [access](const RunConfig& c) { return std::to_string(access(c)); }};
}

template <typename Access>
ConfigKey seed_key(std::string_view name, std::string_view help, Access access) {
  return {name, help,
          [access](RunConfig& c, std::string_view v) {
            access(c) = parse_number<std::uint64_t>(v, "an unsigned 64-bit integer");
          },
          [access](const RunConfig& c) { return std::to_string(access(c)); }};
}

template <typename Parse, typename Access>
ConfigKey enum_key(std::string_view name, std::string_view help, Parse parse,
                   Access access) {
  return {name, help,
          [parse, access](RunConfig& c, std::string_view v) { access(c) = parse(v); },
          [access](const RunConfig& c) { return std::string(to_string(access(c))); }};
}

#define DLPO_FIELD(expr) [](auto& c) -> auto& { return c.expr; }

std::vector<ConfigKey> build_registry() {
  return {
      seed_key("seed", "run seed (data, init, sampling)", DLPO_FIELD(seed)),
      count_key("n", "waveform length", 4, DLPO_FIELD(dims.n)),
      count_key("k", "number of condition classes", 1, DLPO_FIELD(dims.k)),
      count_key("t_steps", "diffusion steps T", 1, DLPO_FIELD(dims.steps)),
      count_key("d_c", "condition embedding width", 1, DLPO_FIELD(dims.d_c)),
      count_key("d_t", "timestep embedding width", 1, DLPO_FIELD(dims.d_t)),
      count_key("h1", "first hidden layer width", 1, DLPO_FIELD(dims.h1)),
      count_key("h2", "second hidden layer width", 1, DLPO_FIELD(dims.h2)),
      real_key("beta_start", "first noise variance", kUnitOpen, DLPO_FIELD(beta_start)),
      real_key("beta_end", "last noise variance", kUnitOpen, DLPO_FIELD(beta_end)),
      real_key("sigma2_min", "floor on reverse-step variances", kPositive,
               DLPO_FIELD(sigma2_min)),
      enum_key("loss_norm", "diffusion residual norm: l2 | l2sq", parse_loss_norm,
               DLPO_FIELD(loss_norm)),
      real_key("amplitude", "clean waveform amplitude", kPositive, DLPO_FIELD(amplitude)),
      real_key("obs_noise", "dataset observation noise std", kNonNegative,
               DLPO_FIELD(obs_noise)),
      real_key("w_spectral", "reward: in-band energy weight", kNonNegative,
               DLPO_FIELD(weights.spectral)),
      real_key("w_smooth", "reward: smoothness weight", kNonNegative,
               DLPO_FIELD(weights.smooth)),
      real_key("w_amp", "reward: amplitude weight", kNonNegative, DLPO_FIELD(weights.amp)),
      real_key("w_autocorr", "held-out: periodicity weight", kNonNegative,
               DLPO_FIELD(weights.autocorr)),
      real_key("w_crest", "held-out: crest factor weight", kNonNegative,
               DLPO_FIELD(weights.crest)),
      count_key("dataset_size", "pretraining set size", 1, DLPO_FIELD(dataset_size)),
      count_key("epochs", "pretraining epochs", 0, DLPO_FIELD(epochs)),
      count_key("pretrain_batch_size", "pretraining minibatch size", 1,
                DLPO_FIELD(pretrain_batch_size)),
      real_key("pretrain_lr", "pretraining Adam learning rate", kPositive,
               DLPO_FIELD(pretrain_lr)),
      enum_key("algo", "rwr | ddpo | dpok | klinr | dlpo | onlydl", parse_algo,
               DLPO_FIELD(rl.algo)),
      real_key("alpha", "reward weight", kNonNegative, DLPO_FIELD(rl.alpha)),
      real_key("beta", "regularizer weight (KL or diffusion residual)", kNonNegative,
               DLPO_FIELD(rl.beta)),
      enum_key("baseline", "none | moving_average", parse_baseline,
               DLPO_FIELD(rl.baseline)),
      real_key("baseline_decay", "moving-average decay", kUnitHalfOpen,
               DLPO_FIELD(rl.baseline_decay)),
      enum_key("dlpo_mode", "direct_grad | shaped_reward", parse_dlpo_mode,
               DLPO_FIELD(rl.dlpo_mode)),
      enum_key("dlpo_t_sampling", "single_uniform | all_steps", parse_step_sampling,
               DLPO_FIELD(rl.dlpo_t_sampling)),
      enum_key("dl_source", "trajectory | dataset", parse_dl_source,
               DLPO_FIELD(rl.dl_source)),
      count_key("batch_size", "trajectories per fine-tuning round", 1,
                DLPO_FIELD(rl.batch_size)),
      count_key("rounds", "fine-tuning rounds (one optimizer step each)", 0,
                DLPO_FIELD(rounds)),
      real_key("lr", "fine-tuning Adam learning rate", kPositive, DLPO_FIELD(adam.lr)),
      real_key("adam_beta1", "Adam first-moment decay", kUnitHalfOpen,
               DLPO_FIELD(adam.beta1)),
      real_key("adam_beta2", "Adam second-moment decay", kUnitHalfOpen,
               DLPO_FIELD(adam.beta2)),
      real_key("adam_eps", "Adam denominator offset", kPositive, DLPO_FIELD(adam.eps)),
      count_key("eval_every", "rounds between validation passes", 1,
                DLPO_FIELD(eval_every)),
      count_key("val_per_class", "validation samples per class", 1,
                DLPO_FIELD(val_per_class)),
      seed_key("val_seed", "validation sampling seed", DLPO_FIELD(val_seed)),
      seed_key("test_seed", "test sampling seed (eval, compare)", DLPO_FIELD(test_seed)),
      count_key("eval_per_condition", "test samples per class", 1,
                DLPO_FIELD(eval_per_condition)),
      count_key("rwr_pool", "pretrained samples in the RWR pool", 1, DLPO_FIELD(rwr_pool)),
      count_key("compare_seeds", "seeds per algorithm in compare", 1,
                DLPO_FIELD(compare_seeds)),
  };
}

#undef DLPO_FIELD

// Key named at the start of a "key: message" validation error.
std::string_view key_of(const std::string& message) {
  const auto colon = message.find(':');
  return colon == std::string::npos ? std::string_view{}
                                    : std::string_view(message).substr(0, colon);
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> registry = build_registry();
  return registry;
}

void RunConfig::validate() const {
  try {
    make_schedule(static_cast<int>(dims.steps), beta_start, beta_end, sigma2_min);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("beta_end: ") + e.what());
  }
  ConditionSpec spec = ConditionSpec::with_classes(dims.n, dims.k);
  spec.amplitude = amplitude;
  spec.obs_noise = obs_noise;
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("k: ") + e.what());
  }
  rl.validate();
}

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::map<std::string, std::size_t, std::less<>> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;

    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("expected 'key = value', got '" + std::string(line) + "'", line_no);
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto& keys = config_keys();
    const auto it = std::find_if(keys.begin(), keys.end(),
                                 [&](const ConfigKey& k) { return k.name == key; });
    if (it == keys.end()) {
      throw ConfigError("unknown key '" + std::string(key) + "'", line_no);
    }
    if (const auto prev = seen.find(key); prev != seen.end()) {
      throw ConfigError("key '" + std::string(key) + "' repeated (first on line " +
                            std::to_string(prev->second) + ")",
                        line_no);
    }
    seen.emplace(std::string(key), line_no);
    try {
      it->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(key) + ": " + e.what(), line_no);
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    const auto where = seen.find(key_of(e.what()));
    throw ConfigError(e.what(), where == seen.end() ? 0 : where->second);
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string canonical_config(const RunConfig& cfg) {
  std::string out;
  for (const ConfigKey& key : config_keys()) {
    out += std::string(key.name) + " = " + key.get(cfg) + "\n";
  }
  return out;
}

std::string config_hash(const RunConfig& cfg) {
  return hex64(fnv1a64(canonical_config(cfg)));
}

std::string describe_config_keys() {
  const RunConfig defaults;
  std::size_t width = 0;
  for (const ConfigKey& key : config_keys()) width = std::max(width, key.name.size());
  std::string out;
  for (const ConfigKey& key : config_keys()) {
    std::string line = "  " + std::string(key.name);
    line.append(width + 2 - key.name.size(), ' ');
    line += "(default: " + key.get(defaults) + ")  " + std::string(key.help) + "\n";
    out += line;
  }
  return out;
}

Experiment make_experiment(const RunConfig& cfg) {
  cfg.validate();
  ConditionSpec spec = ConditionSpec::with_classes(cfg.dims.n, cfg.dims.k);
  spec.amplitude = cfg.amplitude;
  spec.obs_noise = cfg.obs_noise;
  return Experiment(cfg.dims,
                    make_schedule(static_cast<int>(cfg.dims.steps), cfg.beta_start,
                                  cfg.beta_end, cfg.sigma2_min),
                    spec, cfg.weights, cfg.loss_norm);
}

PretrainConfig make_pretrain_config(const RunConfig& cfg) {
  PretrainConfig p;
  p.epochs = cfg.epochs;
  p.batch_size = cfg.pretrain_batch_size;
  p.adam = cfg.adam;
  p.adam.lr = cfg.pretrain_lr;
  p.seed = cfg.seed;
  return p;
}

FinetuneConfig make_finetune_config(const RunConfig& cfg) {
  FinetuneConfig f;
  f.rl = cfg.rl;
  f.rl.loss_norm = cfg.loss_norm;
  f.rounds = cfg.rounds;
  f.adam = cfg.adam;
  f.eval_every = cfg.eval_every;
  f.val_per_class = cfg.val_per_class;
  f.val_seed = cfg.val_seed;
  f.rwr_pool = cfg.rwr_pool;
  f.seed = cfg.seed;
  f.meta = make_meta(cfg);
  return f;
}

CheckpointMeta make_meta(const RunConfig& cfg) {
  return CheckpointMeta{cfg.dims, config_hash(cfg)};
}

std::vector<LabeledWave> make_training_set(const Experiment& exp, const RunConfig& cfg) {
  Rng rng = Rng::stream(cfg.seed, 0xda7a);
  return make_dataset(exp.spec, cfg.dataset_size, rng);
}

}  // namespace dlpo

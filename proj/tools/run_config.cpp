#include "run_config.hpp"

#include <charconv>
#include <fstream>

#include "ggd/error.hpp"

namespace ggd::cli {
namespace {

ordered_json optimizer_json(const OptimizerConfig& o) {
  return {{"kind", std::string(to_string(o.kind))},
          {"learning_rate", o.learning_rate},
          {"rho", o.rho},
          {"epsilon", o.epsilon},
          {"clip_norm", o.clip_norm}};
}

OptimizerConfig optimizer_from(const ordered_json& j) {
  OptimizerConfig o;
  o.kind = parse_optimizer(j.at("kind").get<std::string>());
  o.learning_rate = j.at("learning_rate").get<double>();
  o.rho = j.at("rho").get<double>();
  o.epsilon = j.at("epsilon").get<double>();
  o.clip_norm = j.at("clip_norm").get<double>();
  return o;
}

ordered_json synthetic_json() {
  const SyntheticTaskSpec s;
  ordered_json j = {{"vocab_size", s.vocab_size}, {"min_len", s.min_len},   {"max_len", s.max_len},
                    {"reverse", s.reverse},       {"cipher", s.cipher},     {"swap_prob", s.swap_prob},
                    {"n_train", s.n_train},       {"n_valid", s.n_valid},   {"n_test", s.n_test},
                    {"seed", s.seed}};
  return j;
}

bool compatible(const ordered_json& base, const ordered_json& v) {
  if (base.is_number_float()) return v.is_number();
  if (base.is_number_unsigned()) return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
  if (base.is_number_integer()) return v.is_number_integer();
  return base.type() == v.type();
}

void merge_at(ordered_json& base, const ordered_json& over, const std::string& prefix) {
  if (!over.is_object()) throw ConfigError("config" + (prefix.empty() ? "" : " '" + prefix + "'") + " must be an object");
  for (const auto& [key, value] : over.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    auto& slot = base[key];
    if (slot.is_object()) {
      merge_at(slot, value, path);
    } else if (!compatible(slot, value)) {
      throw ConfigError("config key '" + path + "' has the wrong type");
    } else {
      slot = value;
    }
  }
}

void collect(const ordered_json& j, const std::string& prefix, std::vector<std::string>& out) {
  for (const auto& [key, value] : j.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (value.is_object()) {
      collect(value, path, out);
    } else {
      out.push_back(path);
    }
  }
}

template <typename T>
T parse_number(const std::string& path, const std::string& text) {
  T v{};
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ConfigError("--" + path + ": cannot parse '" + text + "'");
  }
  return v;
}

std::size_t sz(const ordered_json& j, const char* key) { return j.at(key).get<std::size_t>(); }

}  // namespace

ordered_json default_config(Command cmd) {
  if (cmd == Command::kGenData) {
    return {{"output_dir", "data"}, {"data", {{"synthetic", synthetic_json()}}}};
  }
  TrainConfig t;
  const ModelConfig m;
  switch (cmd) {
    case Command::kTrainMle:
      t.max_updates = 2500;
      t.eval_every = 500;
      t.patience = 0;
      break;
    case Command::kTrainRl:
      t.max_updates = 500;
      t.patience = 0;
      break;
    default:
      t.optimizer = {OptimizerKind::kRmsProp, 1e-5};
      t.max_updates = 600;
      t.patience = 0;
      break;
  }
  ordered_json j;
  j["seed"] = t.seed;
  j["output_dir"] = "run";
  // Starting point for REINFORCE and GGD.
  if (cmd != Command::kTrainMle) j["checkpoint"] = "";
  j["data"] = {{"dir", ""}, {"max_len", 0u}, {"synthetic", synthetic_json()}};
  if (cmd == Command::kTrainMle) {
    j["model"] = {{"embed", m.embed}, {"hidden", m.hidden}, {"attention", m.attention}};
  }
  j["train"] = {{"optimizer", optimizer_json(t.optimizer)},
                {"disc_optimizer", optimizer_json(t.disc_optimizer)},
                {"tau", t.tau},
                {"batch_size", t.batch_size},
                {"n_g", t.n_g},
                {"n_d", t.n_d},
                {"entropy_reg", t.entropy_reg},
                {"estimator", std::string(to_string(t.estimator))},
                {"generator_mode", std::string(to_string(t.generator_mode))},
                {"beam", t.beam},
                {"max_epochs", t.max_epochs},
                {"max_updates", t.max_updates},
                {"eval_every", t.eval_every},
                {"patience", t.patience},
                {"eval_size", t.eval_size},
                {"baseline_decay", t.baseline_decay},
                {"threads", t.threads}};
  return j;
}

void merge_config(ordered_json& base, const ordered_json& over) { merge_at(base, over, ""); }

std::vector<std::string> leaf_paths(const ordered_json& cfg) {
  std::vector<std::string> out;
  collect(cfg, "", out);
  return out;
}

void set_leaf(ordered_json& cfg, const std::string& dotted, const std::string& text) {
  ordered_json* node = &cfg;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(key)) throw ConfigError("unknown config key '" + dotted + "'");
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_boolean()) {
    if (text == "true" || text == "1") {
      *node = true;
    } else if (text == "false" || text == "0") {
      *node = false;
    } else {
      throw ConfigError("--" + dotted + ": expected true or false, got '" + text + "'");
    }
  } else if (node->is_number_float()) {
    *node = parse_number<double>(dotted, text);
  } else if (node->is_number_unsigned()) {
    *node = parse_number<std::uint64_t>(dotted, text);
  } else if (node->is_number_integer()) {
    *node = parse_number<std::int64_t>(dotted, text);
  } else if (node->is_string()) {
    *node = text;
  } else {
    throw ConfigError("'" + dotted + "' is not a settable value");
  }
}

ordered_json resolve_config(Command cmd, const std::filesystem::path& file,
                            const std::map<std::string, std::string>& flags) {
  ordered_json cfg = default_config(cmd);
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot read config file " + file.string());
    ordered_json over;
    try {
      over = ordered_json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("config file " + file.string() + ": " + e.what());
    }
    merge_config(cfg, over);
  }
  for (const auto& [path, text] : flags) set_leaf(cfg, path, text);
  return cfg;
}

TrainConfig train_config(const ordered_json& cfg) {
  const auto& t = cfg.at("train");
  TrainConfig c;
  c.optimizer = optimizer_from(t.at("optimizer"));
  c.disc_optimizer = optimizer_from(t.at("disc_optimizer"));
  c.tau = t.at("tau").get<double>();
  c.batch_size = sz(t, "batch_size");
  c.n_g = sz(t, "n_g");
  c.n_d = sz(t, "n_d");
  c.entropy_reg = t.at("entropy_reg").get<bool>();
  c.estimator = parse_estimator(t.at("estimator").get<std::string>());
  c.generator_mode = parse_decode_mode(t.at("generator_mode").get<std::string>());
  c.beam = sz(t, "beam");
  c.max_epochs = sz(t, "max_epochs");
  c.max_updates = sz(t, "max_updates");
  c.seed = cfg.at("seed").get<std::uint64_t>();
  c.eval_every = sz(t, "eval_every");
  c.patience = sz(t, "patience");
  c.eval_size = sz(t, "eval_size");
  c.baseline_decay = t.at("baseline_decay").get<double>();
  c.threads = sz(t, "threads");
  return c;
}

ModelConfig model_config(const ordered_json& cfg, std::size_t source_vocab, std::size_t target_vocab) {
  const auto& m = cfg.at("model");
  ModelConfig c;
  c.source_vocab = source_vocab;
  c.target_vocab = target_vocab;
  c.embed = sz(m, "embed");
  c.hidden = sz(m, "hidden");
  c.attention = sz(m, "attention");
  c.seed = cfg.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

SyntheticTaskSpec synthetic_spec(const ordered_json& cfg) {
  const auto& s = cfg.at("data").at("synthetic");
  SyntheticTaskSpec spec;
  spec.vocab_size = sz(s, "vocab_size");
  spec.min_len = sz(s, "min_len");
  spec.max_len = sz(s, "max_len");
  spec.reverse = s.at("reverse").get<bool>();
  spec.cipher = s.at("cipher").get<bool>();
  spec.swap_prob = s.at("swap_prob").get<double>();
  spec.n_train = sz(s, "n_train");
  spec.n_valid = sz(s, "n_valid");
  spec.n_test = sz(s, "n_test");
  spec.seed = s.at("seed").get<std::uint64_t>();
  return spec;
}

Dataset load_dataset(const ordered_json& cfg) {
  const auto& d = cfg.at("data");
  const std::filesystem::path dir = d.at("dir").get<std::string>();
  if (dir.empty()) {
    auto task = gen_synthetic(synthetic_spec(cfg));
    return {std::move(task.source_vocab), std::move(task.target_vocab), std::move(task.train),
            std::move(task.valid)};
  }
  Dataset ds;
  ds.source_vocab = Vocab::load(dir / "src.vocab");
  ds.target_vocab = Vocab::load(dir / "tgt.vocab");
  const std::size_t cap = sz(d, "max_len");
  ds.train = load_corpus(dir / "train.src", dir / "train.tgt", ds.source_vocab, ds.target_vocab, cap,
                         Split::kTrain);
  ds.valid = load_corpus(dir / "valid.src", dir / "valid.tgt", ds.source_vocab, ds.target_vocab, cap,
                         Split::kValid);
  if (ds.train.empty()) throw InputError("no training pairs in " + dir.string());
  if (ds.valid.empty()) throw InputError("no validation pairs in " + dir.string());
  return ds;
}

void write_run_files(const std::filesystem::path& dir, const ordered_json& cfg) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "config.json") << cfg.dump(2) << "\n";
  const auto& seed = cfg.contains("seed") ? cfg.at("seed") : cfg.at("data").at("synthetic").at("seed");
  std::ofstream(dir / "seed") << seed.get<std::uint64_t>() << "\n";
}

}  // namespace ggd::cli

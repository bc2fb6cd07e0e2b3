// ggd: synthetic data, MLE / REINFORCE / GGD training, decoding, evaluation
// and noise inspection.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ggd/checkpoint.hpp"
#include "ggd/decoding.hpp"
#include "ggd/error.hpp"
#include "ggd/gumbel.hpp"
#include "ggd/metrics.hpp"
#include "ggd/training.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace ggd;
using cli::Command;
using cli::ordered_json;

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Config-driven subcommand: every config leaf is a flag.
struct ConfigCommand {
  Command cmd;
  CLI::App* app = nullptr;
  std::string config_file;
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, CLI::Option*>> options;

  ordered_json resolve() const {
    std::map<std::string, std::string> set;
    for (const auto& [path, opt] : options) {
      if (opt->count() > 0) set[path] = values.at(path);
    }
    return cli::resolve_config(cmd, config_file, set);
  }
};

void add_config_flags(ConfigCommand& c) {
  c.app->add_option("-c,--config", c.config_file, "JSON config file (flags take precedence)");
  const auto defaults = cli::default_config(c.cmd);
  for (const auto& path : cli::leaf_paths(defaults)) {
    std::string name = "--" + path;
    if (path == "output_dir") name = "-o," + name;
    // gen-data has a single seed: the dataset's.
    if (c.cmd == Command::kGenData && path == "data.synthetic.seed") name = "--seed," + name;
    std::string pointer = "/" + path;
    std::replace(pointer.begin(), pointer.end(), '.', '/');
    const auto& leaf = defaults.at(ordered_json::json_pointer(pointer));
    const std::string shown = leaf.is_string() ? leaf.get<std::string>() : leaf.dump();
    c.options.emplace_back(path, c.app->add_option(name, c.values[path], "default: " + shown));
  }
}

void warn_all(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

std::vector<Sentence> read_sources(const fs::path& path, const Vocab& vocab) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path.string());
  std::vector<Sentence> out;
  for (std::string line; std::getline(in, line);) {
    Sentence s = vocab.encode(line);
    s.push_back(kEos);
    out.push_back(std::move(s));
  }
  return out;
}

struct ModeSpec {
  DecodeMode mode = DecodeMode::kGreedy;
  std::size_t beam = 1;
  std::string text;
};

// greedy | sample | beam:S
ModeSpec parse_mode(const std::string& text) {
  ModeSpec m;
  m.text = text;
  if (text.rfind("beam", 0) == 0) {
    m.mode = DecodeMode::kBeam;
    m.beam = 5;
    if (text.size() > 4) {
      if (text[4] != ':') throw ConfigError("bad decode mode '" + text + "' (expected beam:S)");
      try {
        std::size_t used = 0;
        const long long s = std::stoll(text.substr(5), &used);
        if (used != text.size() - 5 || s < 1) throw std::invalid_argument(text);
        m.beam = static_cast<std::size_t>(s);
      } catch (const std::logic_error&) {
        throw ConfigError("bad beam width in '" + text + "'");
      }
    }
  } else {
    m.mode = parse_decode_mode(text);
  }
  return m;
}

void require_same_vocab(const Checkpoint& ckpt, const cli::Dataset& ds) {
  if (!(ckpt.source_vocab == ds.source_vocab) || !(ckpt.target_vocab == ds.target_vocab)) {
    throw InputError("checkpoint vocabularies differ from the data's");
  }
}

std::string metadata(const char* command, const ordered_json& cfg, ordered_json result) {
  ordered_json m;
  m["command"] = command;
  m["config"] = cfg;
  m["result"] = std::move(result);
  return m.dump();
}

// ---------------------------------------------------------------------------

int gen_data(const ordered_json& cfg) {
  const fs::path out = cfg.at("output_dir").get<std::string>();
  const auto task = gen_synthetic(cli::synthetic_spec(cfg));
  cli::write_run_files(out, cfg);
  task.source_vocab.save(out / "src.vocab");
  task.target_vocab.save(out / "tgt.vocab");
  write_corpus(out / "train.src", out / "train.tgt", task.train, task.source_vocab, task.target_vocab);
  write_corpus(out / "valid.src", out / "valid.tgt", task.valid, task.source_vocab, task.target_vocab);
  write_corpus(out / "test.src", out / "test.tgt", task.test, task.source_vocab, task.target_vocab);
  std::cout << "wrote " << task.train.size() << "/" << task.valid.size() << "/" << task.test.size()
            << " train/valid/test pairs to " << out.string() << "\n";
  return 0;
}

int train_mle_cmd(const ordered_json& cfg) {
  const auto tc = cli::train_config(cfg);
  warn_all(tc.validate());
  const auto ds = cli::load_dataset(cfg);
  const ModelParams init(cli::model_config(cfg, ds.source_vocab.size(), ds.target_vocab.size()));
  const fs::path out = cfg.at("output_dir").get<std::string>();
  cli::write_run_files(out, cfg);
  std::ofstream csv(out / "metrics.csv");
  MetricsLog log(&csv);
  auto res = train_mle(ds.train, ds.valid, init, tc, log);
  const ordered_json summary = {{"updates", res.updates}, {"final_bleu", res.final_bleu}};
  save_checkpoint(out / "model.ckpt",
                  {std::move(res.params), ds.source_vocab, ds.target_vocab, metadata("train-mle", cfg, summary)});
  std::cout << summary.dump() << "\n";
  return 0;
}

Checkpoint starting_point(const ordered_json& cfg) {
  const std::string path = cfg.at("checkpoint").get<std::string>();
  if (path.empty()) throw ConfigError("--checkpoint is required");
  return load_checkpoint(path);
}

int train_rl_cmd(const ordered_json& cfg) {
  const auto tc = cli::train_config(cfg);
  warn_all(tc.validate());
  const auto ckpt = starting_point(cfg);
  const auto ds = cli::load_dataset(cfg);
  require_same_vocab(ckpt, ds);
  const fs::path out = cfg.at("output_dir").get<std::string>();
  cli::write_run_files(out, cfg);
  std::ofstream csv(out / "metrics.csv");
  MetricsLog log(&csv);
  auto res = train_rl(ds.train, ds.valid, ckpt.params, tc, log);
  const ordered_json summary = {{"updates", res.updates}, {"final_bleu", res.final_bleu}};
  save_checkpoint(out / "model.ckpt",
                  {std::move(res.params), ds.source_vocab, ds.target_vocab, metadata("train-rl", cfg, summary)});
  std::cout << summary.dump() << "\n";
  return 0;
}

int train_ggd_cmd(const ordered_json& cfg) {
  const auto tc = cli::train_config(cfg);
  warn_all(tc.validate());
  const auto ckpt = starting_point(cfg);
  const auto ds = cli::load_dataset(cfg);
  require_same_vocab(ckpt, ds);
  const fs::path out = cfg.at("output_dir").get<std::string>();
  cli::write_run_files(out, cfg);
  std::ofstream csv(out / "metrics.csv");
  MetricsLog log(&csv);
  auto res = ggd_train(ds.train, ds.valid, ckpt.params, tc, log);
  const ordered_json summary = {{"generator_updates", res.generator_updates},
                                {"discriminator_updates", res.discriminator_updates},
                                {"initial_bleu", res.initial_bleu},
                                {"final_bleu", res.final_bleu}};
  const std::string meta = metadata("train-ggd", cfg, summary);
  save_checkpoint(out / "generator.ckpt", {std::move(res.generator), ds.source_vocab, ds.target_vocab, meta});
  save_checkpoint(out / "discriminator.ckpt",
                  {std::move(res.discriminator), ds.source_vocab, ds.target_vocab, meta});
  std::cout << summary.dump() << "\n";
  return 0;
}

struct DecodeArgs {
  std::string checkpoint, input, output, scores, mode = "greedy";
  std::uint64_t seed = 1;
  std::size_t threads = 1;
};

int decode_cmd(const DecodeArgs& a) {
  const auto ckpt = load_checkpoint(a.checkpoint);
  const auto mode = parse_mode(a.mode);
  const auto sources = read_sources(a.input, ckpt.source_vocab);
  const auto results = decode_all(ckpt.params, sources, mode.mode, mode.beam, Rng(a.seed).split("decode"), a.threads);
  const fs::path out = a.output;
  const fs::path scores = a.scores.empty() ? fs::path(a.output + ".scores") : fs::path(a.scores);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream hyp(out), lp(scores);
  if (!hyp || !lp) throw InputError("cannot write " + out.string());
  for (const auto& r : results) {
    hyp << ckpt.target_vocab.decode(r.tokens) << "\n";
    lp << num(r.log_prob) << "\n";
  }
  const ordered_json cfg = {{"command", "decode"}, {"checkpoint", a.checkpoint}, {"input", a.input},
                            {"mode", mode.text},   {"seed", a.seed},             {"threads", a.threads}};
  std::ofstream(a.output + ".config.json") << cfg.dump(2) << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint, source, reference, hypotheses, report;
  std::size_t beam = 5;
  std::size_t threads = 1;
};

int eval_cmd(const EvalArgs& a) {
  const auto ckpt = load_checkpoint(a.checkpoint);
  const Corpus c = load_corpus(a.source, a.reference, ckpt.source_vocab, ckpt.target_vocab, 0, Split::kTest);
  if (c.empty()) throw InputError("empty evaluation corpus");
  std::vector<Sentence> sources, refs;
  for (const auto& sp : c.pairs) {
    sources.push_back(sp.source);
    refs.push_back(sp.target);
  }
  const Rng rng(0);
  const auto greedy = decode_all(ckpt.params, sources, DecodeMode::kGreedy, 1, rng, a.threads);
  const auto beam = decode_all(ckpt.params, sources, DecodeMode::kBeam, a.beam, rng, a.threads);
  std::vector<Sentence> gh, bh;
  for (const auto& r : greedy) gh.push_back(r.tokens);
  for (const auto& r : beam) bh.push_back(r.tokens);
  ordered_json report = {{"sentences", c.size()},
                         {"bleu_greedy", corpus_bleu(gh, refs)},
                         {"bleu_beam", corpus_bleu(bh, refs)},
                         {"beam", a.beam},
                         {"avg_log_likelihood", avg_log_likelihood(ckpt.params, c.pairs, a.threads)}};
  if (!a.hypotheses.empty()) {
    const auto hyps = read_sources(a.hypotheses, ckpt.target_vocab);
    if (hyps.size() != refs.size()) throw InputError("hypothesis and reference line counts differ");
    report["bleu_hypotheses"] = corpus_bleu(hyps, refs);
  }
  if (!a.report.empty()) {
    std::vector<EvalRow> rows;
    for (std::size_t i = 0; i < c.size(); ++i) {
      rows.push_back({i, sentence_bleu_smoothed(gh[i], refs[i]), log_prob(ckpt.params, sources[i], refs[i]),
                      content_tokens(gh[i]).size(), content_tokens(refs[i]).size()});
    }
    std::ofstream out(a.report);
    if (!out) throw InputError("cannot write " + a.report);
    write_eval_report(out, rows);
  }
  std::cout << report.dump() << "\n";
  return 0;
}

struct NoiseArgs {
  std::string checkpoint, input, output, mode = "greedy";
  std::uint64_t seed = 1;
  double tau = 0.5;
  std::size_t limit = 0;
};

// One row per (sentence, step, word): the logit and the noise of that word.
int inspect_noise_cmd(const NoiseArgs& a) {
  const auto ckpt = load_checkpoint(a.checkpoint);
  const auto mode = parse_mode(a.mode);
  auto sources = read_sources(a.input, ckpt.source_vocab);
  if (a.limit > 0 && sources.size() > a.limit) sources.resize(a.limit);
  std::ofstream out(a.output);
  if (!out) throw InputError("cannot write " + a.output);
  out << "sentence_id,step,word,selected,logit,noise\n";
  const Rng root = Rng(a.seed).split("inspect-noise");
  std::size_t steps = 0, violations = 0;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    Rng rng = root.split(static_cast<std::uint64_t>(i));
    GumbelDecOptions o;
    o.mode = mode.mode;
    o.beam = mode.beam;
    o.tau = a.tau;
    const auto d = gumbel_dec(ckpt.params, sources[i], rng, o);
    for (std::size_t t = 0; t < d.trajectory->steps.size(); ++t) {
      const auto& st = d.trajectory->steps[t];
      ++steps;
      violations += gumbel_max(st.logits, st.noise.g).index != st.hard.index;
      for (std::size_t w = 0; w < st.logits.size(); ++w) {
        out << i << ',' << t << ',' << w << ',' << (w == st.hard.index) << ',' << num(st.logits[w]) << ','
            << num(st.noise.g[w]) << '\n';
      }
    }
  }
  const ordered_json cfg = {{"command", "inspect-noise"}, {"checkpoint", a.checkpoint}, {"input", a.input},
                            {"mode", mode.text},          {"tau", a.tau},               {"seed", a.seed},
                            {"limit", a.limit}};
  std::ofstream(a.output + ".config.json") << cfg.dump(2) << "\n";
  std::cout << ordered_json{{"sentences", sources.size()}, {"steps", steps}, {"violations", violations}}.dump()
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gumbel-greedy decoding laboratory"};
  app.require_subcommand(1);

  std::vector<ConfigCommand> configured;
  configured.reserve(4);
  const std::pair<const char*, Command> cmds[] = {
      {"gen-data", Command::kGenData},
      {"train-mle", Command::kTrainMle},
      {"train-rl", Command::kTrainRl},
      {"train-ggd", Command::kTrainGgd},
  };
  const char* descriptions[] = {
      "write a synthetic corpus and its vocabularies",
      "teacher-forcing pretraining",
      "REINFORCE fine-tuning from a checkpoint",
      "generator/discriminator training from a checkpoint",
  };
  for (std::size_t i = 0; i < 4; ++i) {
    auto& c = configured.emplace_back();
    c.cmd = cmds[i].second;
    c.app = app.add_subcommand(cmds[i].first, descriptions[i]);
    add_config_flags(c);
  }

  DecodeArgs dec;
  auto* decode = app.add_subcommand("decode", "decode source sentences with a checkpoint");
  decode->add_option("--checkpoint", dec.checkpoint)->required();
  decode->add_option("--input", dec.input, "source sentences, one per line")->required();
  decode->add_option("-o,--output", dec.output, "hypotheses, one per line")->required();
  decode->add_option("--scores", dec.scores, "log-probabilities (default: <output>.scores)");
  decode->add_option("--mode", dec.mode, "greedy | sample | beam:S")->capture_default_str();
  decode->add_option("--seed", dec.seed)->capture_default_str();
  decode->add_option("--threads", dec.threads)->capture_default_str();

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "corpus BLEU (greedy and beam) and log-likelihood");
  eval->add_option("--checkpoint", ev.checkpoint)->required();
  eval->add_option("--source", ev.source)->required();
  eval->add_option("--reference", ev.reference)->required();
  eval->add_option("--beam", ev.beam)->capture_default_str();
  eval->add_option("--hypotheses", ev.hypotheses, "also score these hypotheses against the references");
  eval->add_option("--report", ev.report, "per-sentence CSV of the greedy decode");
  eval->add_option("--threads", ev.threads)->capture_default_str();

  NoiseArgs nz;
  auto* noise = app.add_subcommand("inspect-noise", "dump per-step Gumbel noise of GumbelDec");
  noise->add_option("--checkpoint", nz.checkpoint)->required();
  noise->add_option("--input", nz.input, "source sentences, one per line")->required();
  noise->add_option("-o,--output", nz.output, "CSV output")->required();
  noise->add_option("--mode", nz.mode, "greedy | sample | beam:S")->capture_default_str();
  noise->add_option("--tau", nz.tau)->capture_default_str();
  noise->add_option("--seed", nz.seed)->capture_default_str();
  noise->add_option("--limit", nz.limit, "first N sentences only (0 = all)")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    for (const auto& c : configured) {
      if (!c.app->parsed()) continue;
      const auto cfg = c.resolve();
      switch (c.cmd) {
        case Command::kGenData: return gen_data(cfg);
        case Command::kTrainMle: return train_mle_cmd(cfg);
        case Command::kTrainRl: return train_rl_cmd(cfg);
        case Command::kTrainGgd: return train_ggd_cmd(cfg);
      }
    }
    if (decode->parsed()) return decode_cmd(dec);
    if (eval->parsed()) return eval_cmd(ev);
    if (noise->parsed()) return inspect_noise_cmd(nz);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (auto& ch : msg) {
      if (ch == '\n') ch = ' ';
    }
    std::cerr << "ggd: error: " << msg << "\n";
    return 1;
  }
  return 0;
}

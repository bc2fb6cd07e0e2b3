#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "ggd/checkpoint.hpp"
#include "ggd/decoding.hpp"
#include "ggd/error.hpp"
#include "ggd/gumbel.hpp"
#include "ggd/metrics.hpp"
#include "ggd/training.hpp"

namespace py = pybind11;
using namespace ggd;

namespace {

py::dict decode_dict(const DecodeResult& r) {
  py::dict d;
  d["tokens"] = r.tokens;
  d["log_prob"] = r.log_prob;
  d["capped"] = r.capped();
  if (r.trajectory) {
    std::vector<std::vector<double>> noise;
    for (const auto& s : r.trajectory->steps) noise.push_back(s.noise.g);
    d["noise"] = noise;
    d["logits"] = r.step_logits;
  }
  return d;
}

std::vector<std::vector<double>> to_rows(const Tensor& t) {
  std::vector<std::vector<double>> out(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < out.size(); ++r) {
    for (std::size_t c = 0; c < out[r].size(); ++c) out[r][c] = t.at(r, c);
  }
  return out;
}

std::size_t resolved_max_len(const Sentence& source, std::size_t max_len) {
  return max_len == 0 ? default_max_len(source) : max_len;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Gumbel-greedy decoding for sequence-to-sequence models";

  py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_IOError);

  m.attr("PAD") = kPad;
  m.attr("EOS") = kEos;
  m.attr("UNK") = kUnk;

  // --- data
  py::class_<Vocab>(m, "Vocab")
      .def(py::init([](const std::vector<std::string>& tokens) { return Vocab(tokens); }))
      .def_static("load", &Vocab::load)
      .def("save", &Vocab::save)
      .def("__len__", &Vocab::size)
      .def("id", [](const Vocab& v, const std::string& t) { return v.id(t); })
      .def("token", &Vocab::token)
      .def("encode", [](const Vocab& v, const std::string& line) { return v.encode(line); })
      .def("decode", [](const Vocab& v, const Sentence& ids) { return v.decode(ids); });

  py::class_<SyntheticTask>(m, "SyntheticTask")
      .def_readonly("source_vocab", &SyntheticTask::source_vocab)
      .def_readonly("target_vocab", &SyntheticTask::target_vocab)
      .def_readonly("cipher", &SyntheticTask::cipher)
      .def("pairs", [](const SyntheticTask& t, const std::string& split) {
        const Corpus& c = split == "train" ? t.train : split == "valid" ? t.valid : t.test;
        if (split != "train" && split != "valid" && split != "test") throw ConfigError("unknown split " + split);
        std::vector<std::pair<Sentence, Sentence>> out;
        for (const auto& sp : c.pairs) out.emplace_back(sp.source, sp.target);
        return out;
      });

  m.def(
      "gen_synthetic",
      [](std::size_t vocab_size, std::size_t min_len, std::size_t max_len, bool reverse, bool cipher,
         double swap_prob, std::size_t n_train, std::size_t n_valid, std::size_t n_test, std::uint64_t seed) {
        return gen_synthetic({vocab_size, min_len, max_len, reverse, cipher, swap_prob, n_train, n_valid, n_test,
                              seed});
      },
      py::arg("vocab_size") = 30, py::arg("min_len") = 4, py::arg("max_len") = 12, py::arg("reverse") = true,
      py::arg("cipher") = true, py::arg("swap_prob") = 0.0, py::arg("n_train") = 10000,
      py::arg("n_valid") = 1000, py::arg("n_test") = 1000, py::arg("seed") = 1);

  // --- model
  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init([](std::size_t sv, std::size_t tv, std::size_t e, std::size_t h, std::size_t a,
                       std::uint64_t seed) {
             ModelConfig c{sv, tv, e, h, a, seed};
             c.validate();
             return c;
           }),
           py::arg("source_vocab") = 30, py::arg("target_vocab") = 30, py::arg("embed") = 32,
           py::arg("hidden") = 64, py::arg("attention") = 32, py::arg("seed") = 1)
      .def_readonly("source_vocab", &ModelConfig::source_vocab)
      .def_readonly("target_vocab", &ModelConfig::target_vocab)
      .def_readonly("embed", &ModelConfig::embed)
      .def_readonly("hidden", &ModelConfig::hidden)
      .def_readonly("attention", &ModelConfig::attention)
      .def_readonly("seed", &ModelConfig::seed);

  py::class_<ModelParams>(m, "ModelParams")
      .def(py::init<const ModelConfig&>())
      .def_property_readonly("config", &ModelParams::config)
      .def("num_values", &ModelParams::num_values)
      .def(py::self == py::self);

  m.def("log_prob", [](const ModelParams& p, const Sentence& x, const Sentence& y) { return log_prob(p, x, y); });

  m.def(
      "save_checkpoint",
      [](const std::filesystem::path& path, const ModelParams& p, const Vocab& sv, const Vocab& tv,
         const std::string& meta) { save_checkpoint(path, {p, sv, tv, meta}); },
      py::arg("path"), py::arg("params"), py::arg("source_vocab"), py::arg("target_vocab"),
      py::arg("metadata") = "{}");
  m.def("load_checkpoint", [](const std::filesystem::path& path) {
    auto c = load_checkpoint(path);
    return py::make_tuple(std::move(c.params), std::move(c.source_vocab), std::move(c.target_vocab), c.metadata);
  });

  // --- gumbel
  m.def("sample_gumbel", &sample_gumbel, py::arg("u"));
  m.def("gumbel_max", [](const std::vector<double>& a, const std::vector<double>& g) { return gumbel_max(a, g).index; });
  m.def("gumbel_softmax", [](const std::vector<double>& a, const std::vector<double>& g, double tau) {
    return gumbel_softmax(a, g, tau).probs;
  });
  m.def("gumbel_softmax_jacobian", [](const std::vector<double>& a, const std::vector<double>& g, double tau) {
    return to_rows(gumbel_softmax_jacobian(gumbel_softmax(a, g, tau)));
  });
  m.def(
      "infer_noise",
      [](std::size_t selected, const std::vector<double>& a, std::uint64_t seed) {
        Rng rng(seed);
        return infer_noise(selected, a, rng).g;
      },
      py::arg("selected"), py::arg("logits"), py::arg("seed") = 1);

  // --- decoding
  m.def(
      "greedy_decode",
      [](const ModelParams& p, const Sentence& x, std::size_t max_len) {
        return decode_dict(greedy_decode(p, x, resolved_max_len(x, max_len)));
      },
      py::arg("params"), py::arg("source"), py::arg("max_len") = 0);
  m.def(
      "beam_search",
      [](const ModelParams& p, const Sentence& x, std::size_t beam, std::size_t max_len) {
        return decode_dict(beam_search(p, x, beam, resolved_max_len(x, max_len)));
      },
      py::arg("params"), py::arg("source"), py::arg("beam") = 5, py::arg("max_len") = 0);
  m.def(
      "sample_decode",
      [](const ModelParams& p, const Sentence& x, std::uint64_t seed, std::size_t max_len) {
        Rng rng(seed);
        return decode_dict(sample_decode(p, x, resolved_max_len(x, max_len), rng));
      },
      py::arg("params"), py::arg("source"), py::arg("seed") = 1, py::arg("max_len") = 0);
  m.def(
      "gumbel_dec",
      [](const ModelParams& p, const Sentence& x, const std::string& mode, double tau, std::size_t beam,
         std::uint64_t seed) {
        Rng rng(seed);
        GumbelDecOptions o;
        o.mode = parse_decode_mode(mode);
        o.tau = tau;
        o.beam = beam;
        return decode_dict(gumbel_dec(p, x, rng, o));
      },
      py::arg("params"), py::arg("source"), py::arg("mode") = "sampling", py::arg("tau") = 0.5,
      py::arg("beam") = 5, py::arg("seed") = 1);

  // --- metrics
  m.def("sentence_bleu", [](const Sentence& h, const Sentence& r) { return sentence_bleu_smoothed(h, r); });
  m.def("corpus_bleu", [](const std::vector<Sentence>& h, const std::vector<Sentence>& r) {
    return corpus_bleu(h, r);
  });

  // --- training
  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("tau", &TrainConfig::tau)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("n_g", &TrainConfig::n_g)
      .def_readwrite("n_d", &TrainConfig::n_d)
      .def_readwrite("entropy_reg", &TrainConfig::entropy_reg)
      .def_readwrite("max_epochs", &TrainConfig::max_epochs)
      .def_readwrite("max_updates", &TrainConfig::max_updates)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("eval_every", &TrainConfig::eval_every)
      .def_readwrite("patience", &TrainConfig::patience)
      .def_readwrite("eval_size", &TrainConfig::eval_size)
      .def_readwrite("threads", &TrainConfig::threads)
      .def_property(
          "estimator", [](const TrainConfig& c) { return std::string(to_string(c.estimator)); },
          [](TrainConfig& c, const std::string& s) { c.estimator = parse_estimator(s); })
      .def_property(
          "generator_mode", [](const TrainConfig& c) { return std::string(to_string(c.generator_mode)); },
          [](TrainConfig& c, const std::string& s) { c.generator_mode = parse_decode_mode(s); })
      .def(
          "set_optimizer",
          [](TrainConfig& c, const std::string& kind, double lr, bool discriminator) {
            auto& o = discriminator ? c.disc_optimizer : c.optimizer;
            o.kind = parse_optimizer(kind);
            o.learning_rate = lr;
          },
          py::arg("kind"), py::arg("learning_rate"), py::arg("discriminator") = false)
      .def("validate", &TrainConfig::validate);

  // Loops return (result fields..., metrics CSV text).
  m.def("train_mle", [](const SyntheticTask& task, const ModelParams& init, const TrainConfig& cfg) {
    std::ostringstream csv;
    MetricsLog log(&csv);
    TrainResult r;
    {
      py::gil_scoped_release release;
      r = train_mle(task.train, task.valid, init, cfg, log);
    }
    return py::make_tuple(std::move(r.params), r.final_bleu, csv.str());
  });
  m.def("ggd_train", [](const SyntheticTask& task, const ModelParams& theta, const TrainConfig& cfg) {
    std::ostringstream csv;
    MetricsLog log(&csv);
    GgdResult r;
    {
      py::gil_scoped_release release;
      r = ggd_train(task.train, task.valid, theta, cfg, log);
    }
    return py::make_tuple(std::move(r.generator), std::move(r.discriminator), r.final_bleu, csv.str());
  });
  m.def("greedy_bleu", [](const ModelParams& p, const SyntheticTask& task, std::size_t limit) {
    return greedy_bleu(p, task.valid, limit);
  }, py::arg("params"), py::arg("task"), py::arg("limit") = 0);
}

#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "ggd/data.hpp"
#include "ggd/model.hpp"
#include "ggd/training.hpp"

namespace ggd::cli {

using nlohmann::ordered_json;

enum class Command { kGenData, kTrainMle, kTrainRl, kTrainGgd };

// Defaults for a command. Every leaf is also a command-line flag named by
// its dotted path (--train.tau, --model.hidden, --seed, ...).
ordered_json default_config(Command cmd);

// Copies the values of `over` into `base`. Keys must already exist in
// `base` and values must have a compatible type.
void merge_config(ordered_json& base, const ordered_json& over);

// Sets the leaf at a dotted path from command-line text, parsed according
// to the type of the current value.
void set_leaf(ordered_json& cfg, const std::string& dotted, const std::string& text);

// Dotted paths of every leaf, in document order.
std::vector<std::string> leaf_paths(const ordered_json& cfg);

// Resolution order: defaults, then the config file, then flags.
ordered_json resolve_config(Command cmd, const std::filesystem::path& file,
                            const std::map<std::string, std::string>& flags);

TrainConfig train_config(const ordered_json& cfg);
ModelConfig model_config(const ordered_json& cfg, std::size_t source_vocab,
                         std::size_t target_vocab);
SyntheticTaskSpec synthetic_spec(const ordered_json& cfg);

struct Dataset {
  Vocab source_vocab;
  Vocab target_vocab;
  Corpus train;
  Corpus valid;
};

// data.dir (as written by gen-data) when set, otherwise the synthetic task.
Dataset load_dataset(const ordered_json& cfg);

// Writes config.json and seed into `dir`.
void write_run_files(const std::filesystem::path& dir, const ordered_json& cfg);

}  // namespace ggd::cli

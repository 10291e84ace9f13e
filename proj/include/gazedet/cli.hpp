#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace gazedet::cli {

// Resolved options: defaults < config file < command-line flags.
using KV = std::map<std::string, std::string>;

// Flat key=value file; '#' starts a comment.
KV read_config_file(const std::filesystem::path& path);

// exit code 2
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// exit code 3
struct MissingArtifactError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int cmd_synth(const KV& opts);
int cmd_train(const KV& opts);
int cmd_eval(const KV& opts);
int cmd_attn_map(const KV& opts);
int cmd_heads(const KV& opts);
int cmd_ablate(const KV& opts);

// Full dispatch, including --config merging and exit-code mapping:
// 0 success, 1 usage, 2 I/O, 3 missing artifact, 4 numerical divergence.
int run(const std::vector<std::string>& args);

}  // namespace gazedet::cli

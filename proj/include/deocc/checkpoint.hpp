#pragma once

#include <torch/torch.h>

#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

namespace deocc {

inline constexpr int kCheckpointVersion = 1;

using NamedModules = std::vector<std::pair<std::string, torch::nn::Module*>>;

// Versioned container: one sub-archive per named module plus a JSON metadata
// string (kind, config hash, schedule, ...).
void save_checkpoint(const std::string& path, const NamedModules& modules, nlohmann::json meta,
                     torch::optim::Optimizer* optimizer = nullptr);
// Loads the named modules in place and returns the metadata. Throws
// ConfigError on a missing file or version mismatch.
nlohmann::json load_checkpoint(const std::string& path, const NamedModules& modules);
nlohmann::json read_checkpoint_meta(const std::string& path);
// Restores optimizer state saved alongside the modules; false when absent.
bool load_optimizer_state(const std::string& path, torch::optim::Optimizer& optimizer);

void copy_parameters(const torch::nn::Module& src, torch::nn::Module& dst);

}  // namespace deocc

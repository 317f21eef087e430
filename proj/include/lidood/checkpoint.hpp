#pragma once

#include "lidood/diffusion.hpp"
#include "lidood/flow.hpp"
#include "lidood/optim.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lidood {

inline constexpr int kCheckpointVersion = 1;

/// Parsed checkpoint file: an architecture header of key=value lines followed
/// by the flat parameter vector and, optionally, the Adam moments.
///
///   # lidood-checkpoint v1
///   kind=flow
///   d=2
///   ...
///   params <n>
///   <one value per line>
///   adam <step>
///   <m_i v_i per line>
struct Checkpoint {
  std::map<std::string, std::string> header;
  std::vector<double> params;
  std::optional<AdamState> adam;

  const std::string& at(const std::string& key) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

std::string checkpoint_kind(const std::filesystem::path& path);

void save_flow(const std::filesystem::path& path, const FlowModel& model, const AdamState* adam = nullptr);
/// Rejects files whose header disagrees with `expected` when given.
FlowModel load_flow(const std::filesystem::path& path, const std::optional<FlowArch>& expected = std::nullopt,
                    AdamState* adam = nullptr);

void save_score_model(const std::filesystem::path& path, const ScoreModel& model,
                      const AdamState* adam = nullptr);
ScoreModel load_score_model(const std::filesystem::path& path,
                            const std::optional<ScoreArch>& expected = std::nullopt,
                            AdamState* adam = nullptr);

}  // namespace lidood

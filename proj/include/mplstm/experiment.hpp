#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "mplstm/data.hpp"
#include "mplstm/network.hpp"
#include "mplstm/training.hpp"

namespace mplstm {

/// JSON experiment description. Unknown keys are rejected; every key is
/// optional and falls back to the default below.
struct ExperimentConfig {
  CellKind cell = CellKind::Mp;
  FusionMode fusion = FusionMode::Joint;
  bool bidirectional = true;
  std::size_t hidden = 32;
  bool attention = true;
  double dropout = 0.1;
  double lr = 1e-3;
  double rho = 0.9;
  double epsilon = 1e-8;
  std::size_t batch_size = 32;
  std::size_t epochs = 50;
  std::uint64_t seed = 1;

  static ExperimentConfig parse(std::string_view json_text);
  static ExperimentConfig load(const std::filesystem::path& path);
  /// Compact JSON with sorted keys; parse(to_json()) round-trips exactly.
  std::string to_json() const;

  NetworkConfig network(const Dataset& data) const;
  TrainConfig train() const;
};

// -- MPM1 model file --------------------------------------------------------------------
//
//   "MPM1" | u32 LE length L | L bytes of JSON | float64 LE tensors
//
// The JSON is {"config": <ExperimentConfig>, "input_dim": d, "num_classes": K,
// "num_perspectives": m}. Tensors follow member by member (one member, or m
// for score fusion), each in named_tensors() order.

inline constexpr char kModelMagic[4] = {'M', 'P', 'M', '1'};

struct ModelFile {
  ExperimentConfig config;
  Model model;
};

std::vector<unsigned char> encode_model(const ExperimentConfig& config, const Model& model);
ModelFile decode_model(const std::vector<unsigned char>& bytes);
void write_model(const std::filesystem::path& path, const ExperimentConfig& config,
                 const Model& model);
ModelFile read_model(const std::filesystem::path& path);

// -- metrics ---------------------------------------------------------------------------

struct MetricsRow {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

/// `epoch,train_loss,train_acc,val_loss,val_acc` then one row per epoch,
/// reals with 6 significant digits.
std::string format_metrics_csv(const std::vector<MetricsRow>& rows);
void emit_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);

struct TrainOutcome {
  Model model;
  std::vector<MetricsRow> rows;
};

/// Trains from scratch. Validation metrics are computed at the TrainConfig
/// cadence (every epoch from a JSON config) and are NaN in between.
TrainOutcome run_training(const ExperimentConfig& config, const Dataset& train, const Dataset& val,
                          const std::function<void(const MetricsRow&)>& on_epoch = {});

}  // namespace mplstm

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ccnet/config.hpp"
#include "ccnet/dataio.hpp"
#include "ccnet/network.hpp"
#include "ccnet/objectives.hpp"

namespace ccnet {

template <typename T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  std::vector<Buffer<T>> m;  // one per parameter, registry order
  std::vector<Buffer<T>> v;
};

/// One bias-corrected Adam update of every parameter, in registry order. An
/// empty gradient buffer counts as zero. Moments are allocated on first use.
template <typename T>
void adam_step(const NamedTensors<T>& params, const std::vector<Buffer<T>>& grads, AdamState<T>& state, double lr);

struct TrainConfig {
  double lr0 = 4e-4;
  double lr_min = 1e-5;
  Index total_steps = 1000;
  Index batch_size = 1;
  std::uint64_t seed = 0;
  double gamma = 0.1;
  Index checkpoint_interval = 0;  // 0 disables periodic checkpoints
  double grad_clip = 0;           // global L2 norm; 0 disables
  Index crop = 0;                 // square training crop side; 0 trains on full images
  bool augment = true;

  /// Throws ConfigError.
  void validate() const;
};

/// Cosine annealing from lr0 at step 0 to lr_min at total_steps.
double cosine_lr(Index step, const TrainConfig& cfg);

struct LossRecord {
  Index step = 0;
  double lr = 0;
  double mrae = 0;
  double dif = 0;
  double total = 0;
};

/// "step,lr,loss_mrae,loss_dif,loss_total" plus one row per record.
std::string history_csv(const std::vector<LossRecord>& history);

class ParameterMismatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};
class MissingParameterError : public ParameterMismatchError {
 public:
  using ParameterMismatchError::ParameterMismatchError;
};
class UnknownParameterError : public ParameterMismatchError {
 public:
  using ParameterMismatchError::ParameterMismatchError;
};

struct TensorRecord {
  std::string name;
  Shape shape;
  std::vector<float> data;
  bool operator==(const TensorRecord&) const = default;
};

struct AdamRecord {
  std::int64_t t = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<std::vector<float>> m, v;
  bool operator==(const AdamRecord&) const = default;
};

/// Parameters are always stored as float32.
struct Checkpoint {
  ModelConfig config;
  std::vector<TensorRecord> tensors;
  std::optional<AdamRecord> adam;
  bool operator==(const Checkpoint&) const = default;
};

// "CCKP", u16 version, config, u32 tensor count, tensors, u8 optimizer flag
// and optional optimizer state, little-endian throughout.
inline constexpr std::uint16_t kCheckpointVersion = 1;

template <typename T>
Checkpoint make_checkpoint(const ModelConfig& cfg, CcnetParams<T>& params, const AdamState<T>* adam = nullptr);

/// Throws MissingParameterError / UnknownParameterError naming the tensor, or
/// DimensionError on a shape mismatch.
void validate_checkpoint(const Checkpoint& ckpt);

/// Parameters rebuilt from a validated checkpoint.
template <typename T>
CcnetParams<T> restore_params(const Checkpoint& ckpt);
template <typename T>
AdamState<T> restore_adam(const Checkpoint& ckpt);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
/// Reads and validates against the stored config's parameter registry.
Checkpoint load_checkpoint(const std::string& path);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LossRecord> history;
};

using CheckpointCallback = std::function<void(Index step, const Checkpoint&)>;
using ProgressCallback = std::function<void(const LossRecord&)>;

/// Single-threaded float32 training. Each step draws batch_size samples and
/// augmentation seeds from one generator seeded with cfg.seed, sums the
/// per-sample gradients of total_loss / batch_size in sample order, then takes
/// an Adam step at cosine_lr(step). Throws DimensionError if any pair does not
/// fit the model.
TrainResult train_loop(const std::vector<CubePair>& dataset, const TrainConfig& cfg, const ModelConfig& model_cfg,
                       const CheckpointCallback& on_checkpoint = {}, const ProgressCallback& on_step = {});

/// Forward pass of a trained model on one RGB cube, clamped to [0, 1].
HsiCube reconstruct(const CcnetParams<float>& params, const ModelConfig& cfg, const HsiCube& rgb);

}  // namespace ccnet

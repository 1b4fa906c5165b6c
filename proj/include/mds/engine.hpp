#pragma once

// Parallel evaluation engines for the MDS likelihood and gradient.
//
// Each evaluation is a fused transformation-reduction: r_ij (or its gradient
// contribution) is computed and immediately accumulated into a register or a
// small per-worker partial, never stored in an N x N buffer.
//
//   serial               delegates to the scalar reference in likelihood.hpp
//   vectorized           lane_width pairs at a time, packet log Phi
//   threaded             OpenMP over contiguous column blocks (likelihood) or
//                        target rows (gradient)
//   threaded_vectorized  both
//   tiled_device         B x B work-group emulation with in-tile binary-tree
//                        reductions, dispatched over OpenMP

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mds/types.hpp"

namespace mds {

enum class Backend { serial, vectorized, threaded, threaded_vectorized, tiled_device };

enum class DeviceTarget { emulated, accelerator };

std::string_view to_string(Backend backend);
/// Throws ConfigError for unknown names.
Backend parse_backend(std::string_view name);

inline constexpr int kMaxLaneWidth = 8;

struct EngineConfig {
  Backend backend = Backend::serial;
  int thread_count = 1;
  int lane_width = 4;
  int likelihood_tile = 16;
  int gradient_tile = 128;
  DeviceTarget device = DeviceTarget::emulated;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

/// Row-contiguous copy of X with each row zero-padded to a multiple of the
/// lane width.
class PaddedLatentBuffer {
 public:
  PaddedLatentBuffer(const LatentConfiguration& x, int lane_width);

  std::size_t size() const { return n_; }
  std::size_t dim() const { return d_; }
  std::size_t padded_dim() const { return padded_d_; }
  const double* row(std::size_t i) const { return storage_.data() + i * padded_d_; }
  std::span<const double> storage() const { return storage_; }

 private:
  std::size_t n_;
  std::size_t d_;
  std::size_t padded_d_;
  std::vector<double> storage_;
};

/// Element-wise log Phi over a packet of 1, 2, 4 or 8 values.
void batched_log_phi(std::span<const double> in, std::span<double> out);

/// Element-wise phi/Phi over a packet of 1, 2, 4 or 8 values.
void batched_inverse_mills(std::span<const double> in, std::span<double> out);

/// Pairwise binary-tree sum; lengths that are not a power of two behave as
/// if zero-padded.
double tiled_reduction(std::span<const double> partials);

/// In-place variant of tiled_reduction; clobbers `scratch`.
double tiled_reduction_in_place(std::span<double> scratch);

/// Returns whether `backend` can run in this build on this host.
bool backend_available(Backend backend, DeviceTarget device = DeviceTarget::emulated);

class Engine {
 public:
  /// Throws ConfigError for invalid configs and CapabilityError for backends
  /// this host cannot run.
  explicit Engine(EngineConfig config);

  const EngineConfig& config() const { return config_; }

  double log_likelihood(const DissimilarityData& data, const LatentConfiguration& x, const MdsParams& params,
                        bool include_truncation = true) const;

  GradientMatrix gradient(const DissimilarityData& data, const LatentConfiguration& x, const MdsParams& params) const;

  double truncation_sum(const LatentConfiguration& x, const MdsParams& params, const ObservationMask& mask) const;

 private:
  EngineConfig config_;
};

}  // namespace mds

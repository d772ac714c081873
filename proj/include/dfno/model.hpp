// Copyright 2026 The dfno Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
#pragma once

// Distributed Fourier neural operator: layout, parameters, forward pass with
// an optional tape, reverse-mode gradients, loss and Adam.

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "dfno/collectives.hpp"
#include "dfno/dfft.hpp"

namespace dfno {

enum class Activation { relu, gelu, identity };

Activation parse_activation(std::string_view name);
const char* activation_name(Activation a);

// Tensors are laid out (batch, channel, spatial..., time).
struct FnoConfig {
  int num_blocks = 4;
  int width = 20;
  std::vector<Index> modes;  // per spatial dim then time; empty means 8 each
  int in_channels = 1;
  int out_channels = 1;
  Index out_timesteps = 10;
  Activation activation = Activation::relu;
  Shape spatial;
  Index batch = 1;
  std::vector<int> partition;        // input partition, one entry per tensor dim
  std::vector<int> block_partition;  // empty: same as the channel-lift partition
};

void validate(const FnoConfig& config);
std::size_t tensor_ndim(const FnoConfig& config);
Shape input_shape(const FnoConfig& config);
Shape output_shape(const FnoConfig& config);
Shape lifted_shape(const FnoConfig& config);
std::vector<std::size_t> transform_dims(const FnoConfig& config);
std::vector<Index> effective_modes(const FnoConfig& config);

struct ModelLayout {
  Partition input;    // P_x, input data
  Partition time;     // time dim whole, for the time lift
  Partition channel;  // channel dim whole, for channel lift and projection
  Partition block;    // where the FNO blocks run
  DfftPlan plan;
  int workers() const { return input.size(); }
};

ModelLayout make_layout(const FnoConfig& config);

// ---- spectral weights ----

struct OwnedMode {
  Index offset;              // row-major position inside the worker's frequency box
  std::vector<Index> mode;   // global frequency multi-index
};

/// Retained modes {0..m-1} u {n-m..n-1} per dim, intersected with `box`.
std::vector<OwnedMode> mode_ownership(const RegionBox& box, std::span<const Index> modes,
                                      std::span<const Index> sizes);

bool is_retained(Index k, Index m, Index n);
Index retained_position(Index k, Index m, Index n);

// A real field needs R[-k] = conj(R[k]). Modes whose mirror falls outside the
// retained set cannot satisfy that and are held at zero.
enum class ModeKind : std::uint8_t { leading, mirror, self_conjugate, frozen };

ModeKind mode_kind(std::span<const Index> mode, std::span<const Index> modes,
                   std::span<const Index> sizes);

struct SpectralWeights {
  std::vector<Index> modes;
  std::vector<Index> sizes;
  int c_out = 0;
  int c_in = 0;
  std::vector<OwnedMode> owned;
  std::vector<ModeKind> kinds;
  std::vector<Complex> values;  // owned.size() x c_out x c_in

  Complex* matrix(std::size_t i) { return values.data() + i * c_out * c_in; }
  const Complex* matrix(std::size_t i) const { return values.data() + i * c_out * c_in; }
  Shape dense_shape() const;  // (2m_1, ..., 2m_r, c_out, c_in)
};

SpectralWeights make_spectral_weights(const DfftPlan& plan, int rank, std::vector<Index> modes,
                                      int c_out, int c_in);
void init_spectral(SpectralWeights& w, std::uint64_t seed);
void project_spectral(SpectralWeights& w);

/// Dense retained-mode tensor, identical on every worker.
std::vector<Complex> gather_spectral(WorkerContext& ctx, const SpectralWeights& w);
void load_spectral(SpectralWeights& w, std::span<const Complex> dense);

/// Projects a dense retained-mode tensor onto weights that keep the output real:
/// mirrors become the conjugate of their leading partner, self-conjugate modes
/// are made real, frozen modes are zeroed.
std::vector<Complex> hermitian_projection(std::span<const Complex> dense,
                                          std::span<const Index> modes,
                                          std::span<const Index> sizes, int c_out, int c_in);

RealTensor spectral_conv(WorkerContext& ctx, const RealTensor& v, const SpectralWeights& w,
                         const DfftPlan& plan);

// ---- affine layers ----

struct AffineParams {
  RealTensor weight;  // (out, in) on a single-worker root partition
  RealTensor bias;    // (out,) or shape () when absent

  bool has_bias() const { return !bias.shape().empty(); }
  Index out_dim() const { return weight.shape()[0]; }
  Index in_dim() const { return weight.shape()[1]; }
};

AffineParams make_affine(int rank, Index out_dim, Index in_dim, bool bias);
void init_affine(AffineParams& p, std::uint64_t seed);

RealTensor affine_pointwise(WorkerContext& ctx, const RealTensor& x, const AffineParams& p,
                            std::size_t dim);

// ---- model ----

struct ParamView {
  std::string name;
  std::span<double> values;  // complex values appear as interleaved pairs
};

struct ParamSet {
  AffineParams time_lift;
  AffineParams channel_lift;
  std::vector<AffineParams> block;
  std::vector<SpectralWeights> spectral;
  AffineParams projection;

  std::vector<ParamView> views();
  ParamSet zeros_like() const;
};

struct FnoModel {
  FnoConfig config;
  ModelLayout layout;
  int rank = 0;
  ParamSet params;
};

FnoModel init_model(const FnoConfig& config, std::uint64_t seed, int rank);
std::uint64_t parameter_count(const FnoConfig& config);

/// Dense form of one parameter group, used for checkpoints and the reference model.
struct ParamGroup {
  std::string name;
  Shape shape;
  bool complex = false;
  std::vector<double> values;  // complex values interleaved
};

std::vector<ParamGroup> gather_params(WorkerContext& ctx, const FnoModel& model);
void load_params(FnoModel& model, const std::vector<ParamGroup>& groups);

class Tape {
 public:
  using Step = std::function<RealTensor(WorkerContext&, const RealTensor&, ParamSet&)>;

  void record(Step step) { steps_.push_back(std::move(step)); }
  std::size_t size() const { return steps_.size(); }

  /// Hands the recorded steps to the backward pass; a second call is an error.
  std::vector<Step> consume();

 private:
  std::vector<Step> steps_;
  bool replayed_ = false;
};

RealTensor fno_forward(WorkerContext& ctx, const FnoModel& model, const RealTensor& a,
                       Tape* tape = nullptr);

struct Gradients {
  ParamSet params;
  RealTensor input;  // on the input partition
};

Gradients fno_backward(WorkerContext& ctx, const FnoModel& model, Tape& tape,
                       const RealTensor& loss_gradient);

struct Loss {
  double value;
  RealTensor gradient;  // d value / d prediction
};

/// ||y - target|| / ||target||, identical on every worker.
double relative_lp_loss(WorkerContext& ctx, const RealTensor& y, const RealTensor& target);
Loss relative_lp_loss_grad(WorkerContext& ctx, const RealTensor& y, const RealTensor& target);

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamOptions options;
  long step = 0;
  ParamSet m;
  ParamSet v;
};

AdamState make_adam(const ParamSet& params, AdamOptions options = {});
void adam_update(std::span<double> theta, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, long step, const AdamOptions& options);
void adam_step(ParamSet& params, ParamSet& grads, AdamState& state);

}  // namespace dfno

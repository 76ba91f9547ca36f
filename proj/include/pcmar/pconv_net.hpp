#pragma once

#include <cstdint>
#include <vector>

#include "pcmar/autograd.hpp"
#include "pcmar/keyvalue.hpp"

namespace pcmar {

/// Image or feature map paired with a single-channel validity mask
/// (1 = valid, 0 = hole). data is [N,C,H,W], mask is [N,1,H,W].
template <typename T>
struct BasicMaskedImage {
  BasicTensor<T> data;
  BasicTensor<T> mask;

  /// Throws on non-binary masks, spatial mismatch or non-finite data.
  void validate() const;
};

using MaskedImage = BasicMaskedImage<float>;

/// How the mask is padded at image borders. `hole` treats the outside as
/// invalid, so border windows are renormalized; `valid` treats it as known
/// zeros, which makes the layer coincide with a zero-padded convolution when
/// the mask is all ones.
enum class MaskPadding { hole, valid };

template <typename T>
void require_binary_mask(const BasicTensor<T>& mask, const char* where);

/// Output-validity rule of a partial convolution: 1 wherever at least one
/// valid input pixel falls in the k x k window.
template <typename T>
BasicTensor<T> mask_update(const BasicTensor<T>& mask, std::size_t kernel, std::size_t stride, std::size_t pad,
                           MaskPadding padding = MaskPadding::hole);

template <typename T>
struct PartialConvResult {
  ag::Var<T> data;
  BasicTensor<T> mask;
};

/// Masked convolution with renormalization.
///
/// For every output pixel with s = number of valid pixels in the window of the
/// single-channel mask: if s > 0 the value is W^T (X * M) * (k*k*C)/(C*s) + b,
/// otherwise 0. The returned mask is 1 exactly where s > 0.
template <typename T>
PartialConvResult<T> partial_conv(const ag::Var<T>& x, const BasicTensor<T>& mask, ag::Parameter<T>& weight,
                                  ag::Parameter<T>* bias, std::size_t stride, std::size_t pad,
                                  MaskPadding padding = MaskPadding::hole);

/// Weights, bias and geometry of one partial-convolution layer.
template <typename T>
class PartialConvLayer {
 public:
  PartialConvLayer(ag::Parameter<T> weight, ag::Parameter<T> bias, std::size_t stride,
                   MaskPadding padding = MaskPadding::hole);

  std::size_t kernel() const { return weight_.value().dim(2); }
  std::size_t stride() const { return stride_; }
  std::size_t pad() const { return kernel() / 2; }
  ag::Parameter<T>& weight() { return weight_; }
  ag::Parameter<T>& bias() { return bias_; }

  PartialConvResult<T> forward(const ag::Var<T>& x, const BasicTensor<T>& mask);
  /// Graph-free evaluation.
  BasicMaskedImage<T> forward(const BasicMaskedImage<T>& x);

 private:
  ag::Parameter<T> weight_;
  ag::Parameter<T> bias_;
  std::size_t stride_;
  MaskPadding padding_;
};

enum class UNetVariant { partial, conventional };

const char* variant_name(UNetVariant v);
UNetVariant parse_variant(const std::string& name);

struct EncoderLayer {
  std::size_t kernel = 3;
  std::size_t stride = 2;
  std::size_t channels = 16;
};

/// Encoder-decoder layout. Encoder layer i halves the resolution; decoder
/// stage i upsamples 2x, concatenates the matching encoder skip (the network
/// input for the last stage) and applies a stride-1 convolution.
struct UNetSpec {
  UNetVariant variant = UNetVariant::partial;
  std::size_t in_channels = 1;
  std::vector<EncoderLayer> encoder;
  std::vector<std::size_t> decoder_channels;
  std::size_t decoder_kernel = 3;
  double leaky_slope = 0.2;
  MaskPadding mask_padding = MaskPadding::hole;

  /// Ten-layer default: encoder 7/5/3/3/3 kernels, 16/32/64/128/128
  /// channels; decoder 128/64/32/16/1.
  static UNetSpec desk_default(UNetVariant variant);

  std::size_t depth() const { return encoder.size(); }
  /// Spatial sizes must be divisible by this.
  std::size_t resolution_multiple() const;
  void validate() const;

  KeyValue to_keyvalue() const;
  static UNetSpec from_keyvalue(const KeyValue& kv);
};

template <typename T>
struct UNetOutput {
  ag::Var<T> prediction;   // [N,1,H,W], linear activation
  BasicTensor<T> mask;     // final decoder mask; all ones for the conventional variant
};

/// The U-Net in either variant.
///
/// Partial variant: the input is zero-filled (data * mask) and every layer is
/// a partial convolution; decoder windows use the elementwise maximum of the
/// upsampled deeper mask and the skip mask. Conventional variant: the input
/// is concat(data, mask) and every layer is a plain convolution.
template <typename T>
class UNet {
 public:
  UNet(UNetSpec spec, std::uint64_t seed);

  const UNetSpec& spec() const { return spec_; }
  std::vector<ag::Parameter<T>*> parameters();
  std::size_t parameter_count() const;

  /// data [N,in_channels,H,W], mask [N,1,H,W]; H and W must be multiples of
  /// spec().resolution_multiple().
  UNetOutput<T> forward(const BasicTensor<T>& data, const BasicTensor<T>& mask);

 private:
  struct Layer {
    ag::Parameter<T> weight;
    ag::Parameter<T> bias;
    std::size_t stride;
  };

  UNetSpec spec_;
  std::vector<Layer> layers_;
};

/// mask * data + (1 - mask) * pred. pred is [N,1,H,W] like data.
template <typename T>
BasicTensor<T> composite_output(const BasicTensor<T>& pred, const BasicMaskedImage<T>& x);

template <typename T>
struct LossTerms {
  ag::Var<T> total;
  T valid = 0;
  T hole = 0;
  T tv = 0;
};

inline constexpr double kValidWeight = 1.0;
inline constexpr double kHoleWeight = 6.0;
inline constexpr double kTvWeight = 0.1;

/// L = L_valid + 6 L_hole + 0.1 L_tv.
///
/// L_valid / L_hole are mean absolute errors over valid / hole pixels (0 when
/// the set is empty). L_tv is the total variation of the composite residual
/// (1 - mask) * (pred - target) over neighbor pairs inside the hole region
/// dilated by one pixel, divided by the element count.
template <typename T>
LossTerms<T> inpainting_loss(const ag::Var<T>& pred, const BasicTensor<T>& target, const BasicTensor<T>& mask);

}  // namespace pcmar

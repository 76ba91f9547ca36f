#include "pcmar/pconv_net.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pcmar/kernels.hpp"
#include "pcmar/rng.hpp"

namespace pcmar {
namespace {

template <typename T>
void require_mask_fits(const BasicTensor<T>& mask, const Shape& data, const char* where) {
  if (data.size() != 4) throw ShapeError(std::string(where) + ": data must be [N,C,H,W], got " + shape_str(data));
  if (mask.ndim() != 4 || mask.dim(0) != data[0] || mask.dim(1) != 1 || mask.dim(2) != data[2] || mask.dim(3) != data[3]) {
    throw ShapeError(std::string(where) + ": mask " + shape_str(mask.shape()) + " does not match data " + shape_str(data));
  }
}

template <typename T>
BasicTensor<T> upsample_mask(const BasicTensor<T>& m) {
  const auto N = m.dim(0), H = m.dim(2), W = m.dim(3);
  BasicTensor<T> out({N, 1, 2 * H, 2 * W});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t y = 0; y < 2 * H; ++y)
      for (std::size_t x = 0; x < 2 * W; ++x) out.at(n, 0, y, x) = m.at(n, 0, y / 2, x / 2);
  return out;
}

template <typename T>
BasicTensor<T> elementwise_max(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  BasicTensor<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(a[i], b[i]);
  return out;
}

std::vector<std::size_t> parse_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(static_cast<std::size_t>(std::stoul(item)));
  return out;
}

std::string join_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

}  // namespace

template <typename T>
void require_binary_mask(const BasicTensor<T>& mask, const char* where) {
  for (T v : mask.data()) {
    if (v != T{0} && v != T{1}) throw ValueError(std::string(where) + ": mask is not binary");
  }
}

template <typename T>
void BasicMaskedImage<T>::validate() const {
  require_mask_fits(mask, data.shape(), "MaskedImage");
  require_binary_mask(mask, "MaskedImage");
  data.require_finite("MaskedImage");
}

template <typename T>
BasicTensor<T> mask_update(const BasicTensor<T>& mask, std::size_t kernel, std::size_t stride, std::size_t pad,
                           MaskPadding padding) {
  require_binary_mask(mask, "mask_update");
  auto s = kernels::window_sum(mask, kernel, stride, pad, padding == MaskPadding::valid ? T{1} : T{0});
  for (auto& v : s.data()) v = v > 0 ? T{1} : T{0};
  return s;
}

template <typename T>
PartialConvResult<T> partial_conv(const ag::Var<T>& x, const BasicTensor<T>& mask, ag::Parameter<T>& weight,
                                  ag::Parameter<T>* bias, std::size_t stride, std::size_t pad, MaskPadding padding) {
  require_mask_fits(mask, x->value.shape(), "partial_conv");
  require_binary_mask(mask, "partial_conv");
  const auto& ws = weight.value().shape();
  if (ws.size() != 4) throw ShapeError("partial_conv weight must be [F,C,k,k], got " + shape_str(ws));
  const auto k = ws[2];
  const auto C = ws[1];

  auto masked = ag::mask_multiply(x, mask);
  auto raw = ag::conv2d(masked, weight.var(), ag::Var<T>{}, stride, pad);

  auto counts = kernels::window_sum(mask, k, stride, pad, padding == MaskPadding::valid ? T{1} : T{0});
  BasicTensor<T> ratio = BasicTensor<T>::zeros_like(counts);
  BasicTensor<T> out_mask = BasicTensor<T>::zeros_like(counts);
  const T ones_sum = static_cast<T>(k * k * C);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] > 0) {
      ratio[i] = ones_sum / (static_cast<T>(C) * counts[i]);
      out_mask[i] = T{1};
    }
  }
  auto out = ag::renorm_bias(raw, ratio, bias ? bias->var() : ag::Var<T>{});
  return {std::move(out), std::move(out_mask)};
}

template <typename T>
PartialConvLayer<T>::PartialConvLayer(ag::Parameter<T> weight, ag::Parameter<T> bias, std::size_t stride,
                                      MaskPadding padding)
    : weight_(std::move(weight)), bias_(std::move(bias)), stride_(stride), padding_(padding) {
  const auto& ws = weight_.value().shape();
  if (ws.size() != 4 || ws[2] != ws[3] || ws[2] % 2 == 0) {
    throw ShapeError("PartialConvLayer weight must be [F,C,k,k] with odd k, got " + shape_str(ws));
  }
  if (bias_.value().ndim() != 1 || bias_.value().dim(0) != ws[0]) {
    throw ShapeError("PartialConvLayer bias must be [" + std::to_string(ws[0]) + "]");
  }
}

template <typename T>
PartialConvResult<T> PartialConvLayer<T>::forward(const ag::Var<T>& x, const BasicTensor<T>& mask) {
  return partial_conv(x, mask, weight_, &bias_, stride_, pad(), padding_);
}

template <typename T>
BasicMaskedImage<T> PartialConvLayer<T>::forward(const BasicMaskedImage<T>& x) {
  auto r = forward(ag::constant(x.data), x.mask);
  return {r.data->value, std::move(r.mask)};
}

const char* variant_name(UNetVariant v) { return v == UNetVariant::partial ? "partial" : "conventional"; }

UNetVariant parse_variant(const std::string& name) {
  if (name == "partial") return UNetVariant::partial;
  if (name == "conventional") return UNetVariant::conventional;
  throw ValueError("unknown network variant '" + name + "' (expected partial|conventional)");
}

UNetSpec UNetSpec::desk_default(UNetVariant variant) {
  UNetSpec s;
  s.variant = variant;
  s.encoder = {{7, 2, 16}, {5, 2, 32}, {3, 2, 64}, {3, 2, 128}, {3, 2, 128}};
  s.decoder_channels = {128, 64, 32, 16, 1};
  return s;
}

std::size_t UNetSpec::resolution_multiple() const {
  std::size_t m = 1;
  for (const auto& e : encoder) m *= e.stride;
  return m;
}

void UNetSpec::validate() const {
  if (encoder.empty()) throw ValueError("UNetSpec: encoder is empty");
  if (decoder_channels.size() != encoder.size()) {
    throw ValueError("UNetSpec: " + std::to_string(encoder.size()) + " encoder layers but " +
                     std::to_string(decoder_channels.size()) + " decoder layers");
  }
  if (in_channels < 1) throw ValueError("UNetSpec: in_channels must be >= 1");
  for (const auto& e : encoder) {
    if (e.kernel % 2 == 0) throw ValueError("UNetSpec: encoder kernels must be odd");
    if (e.stride != 2) throw ValueError("UNetSpec: encoder strides must be 2 to mirror the 2x decoder upsampling");
    if (e.channels < 1) throw ValueError("UNetSpec: encoder channels must be >= 1");
  }
  if (decoder_kernel % 2 == 0) throw ValueError("UNetSpec: decoder kernel must be odd");
  for (auto c : decoder_channels)
    if (c < 1) throw ValueError("UNetSpec: decoder channels must be >= 1");
  if (decoder_channels.back() != 1) throw ValueError("UNetSpec: last decoder layer must have 1 channel");
}

KeyValue UNetSpec::to_keyvalue() const {
  KeyValue kv;
  std::vector<std::size_t> k, s, c;
  for (const auto& e : encoder) {
    k.push_back(e.kernel);
    s.push_back(e.stride);
    c.push_back(e.channels);
  }
  kv.set("variant", variant_name(variant));
  kv.set("in_channels", std::to_string(in_channels));
  kv.set("encoder_kernels", join_list(k));
  kv.set("encoder_strides", join_list(s));
  kv.set("encoder_channels", join_list(c));
  kv.set("decoder_channels", join_list(decoder_channels));
  kv.set("decoder_kernel", std::to_string(decoder_kernel));
  kv.set("leaky_slope", leaky_slope);
  kv.set("mask_padding", mask_padding == MaskPadding::hole ? "hole" : "valid");
  return kv;
}

UNetSpec UNetSpec::from_keyvalue(const KeyValue& kv) {
  UNetSpec s = desk_default(parse_variant(kv.get("variant", "partial")));
  s.in_channels = static_cast<std::size_t>(kv.get_int("in_channels", 1));
  if (kv.has("encoder_kernels") || kv.has("encoder_strides") || kv.has("encoder_channels")) {
    const auto k = parse_list(kv.get("encoder_kernels"));
    const auto st = parse_list(kv.get("encoder_strides"));
    const auto c = parse_list(kv.get("encoder_channels"));
    if (k.size() != st.size() || k.size() != c.size()) throw ValueError("UNetSpec: encoder lists differ in length");
    s.encoder.clear();
    for (std::size_t i = 0; i < k.size(); ++i) s.encoder.push_back({k[i], st[i], c[i]});
  }
  if (kv.has("decoder_channels")) s.decoder_channels = parse_list(kv.get("decoder_channels"));
  s.decoder_kernel = static_cast<std::size_t>(kv.get_int("decoder_kernel", 3));
  s.leaky_slope = kv.get_double("leaky_slope", 0.2);
  const auto mp = kv.get("mask_padding", "hole");
  if (mp != "hole" && mp != "valid") throw ValueError("UNetSpec: mask_padding must be hole|valid");
  s.mask_padding = mp == "hole" ? MaskPadding::hole : MaskPadding::valid;
  s.validate();
  return s;
}

template <typename T>
UNet<T>::UNet(UNetSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  Rng rng(seed);
  const bool partial = spec_.variant == UNetVariant::partial;
  const std::string prefix = partial ? "pconv" : "conv";
  const std::size_t input_channels = spec_.in_channels + (partial ? 0 : 1);
  std::vector<std::size_t> level_channels{input_channels};

  auto make = [&](std::size_t index, std::size_t in_c, std::size_t out_c, std::size_t k, std::size_t stride) {
    BasicTensor<T> w({out_c, in_c, k, k});
    const double stddev = std::sqrt(2.0 / static_cast<double>(in_c * k * k));
    for (auto& v : w.data()) v = static_cast<T>(rng.normal(0.0, stddev));
    const auto name = prefix + std::to_string(index);
    layers_.push_back(Layer{ag::Parameter<T>(name + ".weight", std::move(w)),
                            ag::Parameter<T>(name + ".bias", BasicTensor<T>({out_c})), stride});
  };

  std::size_t in_c = input_channels;
  std::size_t index = 1;
  for (const auto& e : spec_.encoder) {
    make(index++, in_c, e.channels, e.kernel, e.stride);
    in_c = e.channels;
    level_channels.push_back(in_c);
  }
  for (std::size_t j = 0; j < spec_.depth(); ++j) {
    const std::size_t skip = level_channels[spec_.depth() - 1 - j];
    make(index++, in_c + skip, spec_.decoder_channels[j], spec_.decoder_kernel, 1);
    in_c = spec_.decoder_channels[j];
  }
}

template <typename T>
std::vector<ag::Parameter<T>*> UNet<T>::parameters() {
  std::vector<ag::Parameter<T>*> out;
  for (auto& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

template <typename T>
std::size_t UNet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.value().size() + l.bias.value().size();
  return n;
}

template <typename T>
UNetOutput<T> UNet<T>::forward(const BasicTensor<T>& data, const BasicTensor<T>& mask) {
  require_mask_fits(mask, data.shape(), "unet_forward");
  if (data.dim(1) != spec_.in_channels) {
    throw ShapeError("unet_forward: expected " + std::to_string(spec_.in_channels) + " input channels, got " +
                     std::to_string(data.dim(1)));
  }
  const auto mult = spec_.resolution_multiple();
  if (data.dim(2) % mult != 0 || data.dim(3) % mult != 0) {
    throw ShapeError("unet_forward: resolution " + std::to_string(data.dim(2)) + "x" + std::to_string(data.dim(3)) +
                     " is not a multiple of " + std::to_string(mult));
  }
  require_binary_mask(mask, "unet_forward");
  data.require_finite("unet_forward input");

  const auto depth = spec_.depth();
  const T slope = static_cast<T>(spec_.leaky_slope);
  std::vector<ag::Var<T>> skips;

  if (spec_.variant == UNetVariant::partial) {
    std::vector<BasicTensor<T>> skip_masks;
    BasicTensor<T> zero_filled = data;
    const auto C = data.dim(1), P = data.dim(2) * data.dim(3);
    for (std::size_t n = 0; n < data.dim(0); ++n)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t p = 0; p < P; ++p) zero_filled[(n * C + c) * P + p] *= mask[n * P + p];
    ag::Var<T> h = ag::constant(std::move(zero_filled));
    BasicTensor<T> m = mask;
    skips.push_back(h);
    skip_masks.push_back(m);
    for (std::size_t i = 0; i < depth; ++i) {
      auto& l = layers_[i];
      auto r = partial_conv(h, m, l.weight, &l.bias, l.stride, spec_.encoder[i].kernel / 2, spec_.mask_padding);
      h = ag::relu(r.data);
      m = std::move(r.mask);
      if (i + 1 < depth) {
        skips.push_back(h);
        skip_masks.push_back(m);
      }
    }
    for (std::size_t j = 0; j < depth; ++j) {
      auto& l = layers_[depth + j];
      const auto idx = depth - 1 - j;
      auto hc = ag::concat_channels(ag::upsample_nearest2x(h), skips[idx]);
      auto mc = elementwise_max(upsample_mask(m), skip_masks[idx]);
      auto r = partial_conv(hc, mc, l.weight, &l.bias, 1, spec_.decoder_kernel / 2, spec_.mask_padding);
      h = j + 1 < depth ? ag::leaky_relu(r.data, slope) : r.data;
      m = std::move(r.mask);
    }
    return {h, std::move(m)};
  }

  ag::Var<T> h = ag::concat_channels(ag::constant(data), ag::constant(mask));
  skips.push_back(h);
  for (std::size_t i = 0; i < depth; ++i) {
    auto& l = layers_[i];
    h = ag::relu(ag::conv2d(h, l.weight, &l.bias, l.stride, spec_.encoder[i].kernel / 2));
    if (i + 1 < depth) skips.push_back(h);
  }
  for (std::size_t j = 0; j < depth; ++j) {
    auto& l = layers_[depth + j];
    auto hc = ag::concat_channels(ag::upsample_nearest2x(h), skips[depth - 1 - j]);
    auto r = ag::conv2d(hc, l.weight, &l.bias, 1, spec_.decoder_kernel / 2);
    h = j + 1 < depth ? ag::leaky_relu(r, slope) : r;
  }
  BasicTensor<T> ones({data.dim(0), 1, data.dim(2), data.dim(3)}, T{1});
  return {h, std::move(ones)};
}

template <typename T>
BasicTensor<T> composite_output(const BasicTensor<T>& pred, const BasicMaskedImage<T>& x) {
  if (pred.shape() != x.data.shape()) {
    throw ShapeError("composite_output: prediction " + shape_str(pred.shape()) + " vs data " + shape_str(x.data.shape()));
  }
  require_mask_fits(x.mask, x.data.shape(), "composite_output");
  const auto C = pred.dim(1), P = pred.dim(2) * pred.dim(3);
  BasicTensor<T> out = pred;
  for (std::size_t n = 0; n < pred.dim(0); ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < P; ++p) {
        const auto i = (n * C + c) * P + p;
        const T m = x.mask[n * P + p];
        out[i] = m * x.data[i] + (T{1} - m) * pred[i];
      }
  return out;
}

template <typename T>
LossTerms<T> inpainting_loss(const ag::Var<T>& pred, const BasicTensor<T>& target, const BasicTensor<T>& mask) {
  if (pred->value.shape() != target.shape()) {
    throw ShapeError("inpainting_loss: prediction " + shape_str(pred->value.shape()) + " vs target " +
                     shape_str(target.shape()));
  }
  if (target.ndim() != 4 || target.dim(1) != 1) throw ShapeError("inpainting_loss: expects [N,1,H,W] tensors");
  require_mask_fits(mask, target.shape(), "inpainting_loss");
  require_binary_mask(mask, "inpainting_loss");

  BasicTensor<T> hole_mask = mask;
  T n_valid = 0;
  for (auto& v : hole_mask.data()) {
    n_valid += v;
    v = T{1} - v;
  }
  const T n_total = static_cast<T>(mask.size());
  const T n_hole = n_total - n_valid;

  auto diff = ag::sub(pred, ag::constant(target));
  auto absdiff = ag::abs(diff);
  auto l_valid = n_valid > 0 ? ag::scale(ag::sum(ag::mask_multiply(absdiff, mask)), T{1} / n_valid)
                             : ag::constant(BasicTensor<T>({1}));
  auto l_hole = n_hole > 0 ? ag::scale(ag::sum(ag::mask_multiply(absdiff, hole_mask)), T{1} / n_hole)
                           : ag::constant(BasicTensor<T>({1}));
  ag::Var<T> l_tv;
  if (n_hole > 0) {
    auto residual = ag::mask_multiply(diff, hole_mask);
    auto region = mask_update(hole_mask, 3, 1, 1);
    l_tv = ag::scale(ag::total_variation(residual, region), T{1} / n_total);
  } else {
    l_tv = ag::constant(BasicTensor<T>({1}));
  }
  auto total = ag::add(ag::add(ag::scale(l_valid, static_cast<T>(kValidWeight)), ag::scale(l_hole, static_cast<T>(kHoleWeight))),
                       ag::scale(l_tv, static_cast<T>(kTvWeight)));
  return {total, l_valid->value[0], l_hole->value[0], l_tv->value[0]};
}

#define PCMAR_INSTANTIATE(T)                                                                                         \
  template struct BasicMaskedImage<T>;                                                                               \
  template void require_binary_mask<T>(const BasicTensor<T>&, const char*);                                          \
  template BasicTensor<T> mask_update<T>(const BasicTensor<T>&, std::size_t, std::size_t, std::size_t, MaskPadding); \
  template PartialConvResult<T> partial_conv<T>(const ag::Var<T>&, const BasicTensor<T>&, ag::Parameter<T>&,         \
                                                ag::Parameter<T>*, std::size_t, std::size_t, MaskPadding);           \
  template class PartialConvLayer<T>;                                                                                \
  template class UNet<T>;                                                                                            \
  template BasicTensor<T> composite_output<T>(const BasicTensor<T>&, const BasicMaskedImage<T>&);                    \
  template LossTerms<T> inpainting_loss<T>(const ag::Var<T>&, const BasicTensor<T>&, const BasicTensor<T>&);

PCMAR_INSTANTIATE(float)
PCMAR_INSTANTIATE(double)
#undef PCMAR_INSTANTIATE

}  // namespace pcmar

#include "swarmseg/codec.hpp"

#include <cstring>
#include <string>

#include "swarmseg/conv.hpp"
#include "swarmseg/errors.hpp"

namespace swarmseg {

namespace {

std::string entry(const char* prefix, const char* leaf) {
  return std::string(prefix) + "." + leaf;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw data_error("query message truncated");
  std::uint32_t v = static_cast<std::uint32_t>(in[pos]) |
                    (static_cast<std::uint32_t>(in[pos + 1]) << 8) |
                    (static_cast<std::uint32_t>(in[pos + 2]) << 16) |
                    (static_cast<std::uint32_t>(in[pos + 3]) << 24);
  pos += 4;
  return v;
}

}  // namespace

void init_codec_params(ParamBundle& params, const ModelConfig& model, Rng& rng) {
  const int hidden = std::max(1, model.feature_dim / 2);
  params.add("query_enc.conv1.w", init_conv_kernel(rng, 1, model.feature_dim, hidden));
  params.add("query_enc.conv1.b", zero_bias(hidden));
  params.add("query_enc.conv2.w", init_conv_kernel(rng, 1, hidden, model.query_dim));
  params.add("query_enc.conv2.b", zero_bias(model.query_dim));
  params.add("key_enc.conv1.w", init_conv_kernel(rng, 1, model.feature_dim, hidden));
  params.add("key_enc.conv1.b", zero_bias(hidden));
  params.add("key_enc.conv2.w", init_conv_kernel(rng, 1, hidden, model.key_dim));
  params.add("key_enc.conv2.b", zero_bias(model.key_dim));
  params.add("qk_transform.w", init_conv_kernel(rng, 1, model.query_dim, model.key_dim));
}

EncoderForward encoder_forward(const GridTensor& features, const ParamBundle& params,
                               const char* prefix) {
  EncoderForward f;
  f.pre1 = conv2d_forward(features, params.at(entry(prefix, "conv1.w")).value,
                          params.at(entry(prefix, "conv1.b")).value, 1);
  f.act1 = relu_forward(f.pre1);
  f.out = conv2d_forward(f.act1, params.at(entry(prefix, "conv2.w")).value,
                         params.at(entry(prefix, "conv2.b")).value, 1);
  return f;
}

GridTensor encoder_backward(const EncoderForward& fwd, const GridTensor& features,
                            const GridTensor& dout, ParamBundle& params, const char* prefix) {
  auto& w2 = params.at(entry(prefix, "conv2.w"));
  auto& b2 = params.at(entry(prefix, "conv2.b"));
  GridTensor dact1 = conv2d_backward(dout, fwd.act1, w2.value, 1, w2.grad, b2.grad);
  GridTensor dpre1 = relu_backward(dact1, fwd.pre1);
  auto& w1 = params.at(entry(prefix, "conv1.w"));
  auto& b1 = params.at(entry(prefix, "conv1.b"));
  return conv2d_backward(dpre1, features, w1.value, 1, w1.grad, b1.grad);
}

QueryMap encode_query(const GridTensor& features, const ParamBundle& params, int agent_id) {
  return {encoder_forward(features, params, "query_enc").out, agent_id};
}

KeyMap encode_key(const GridTensor& features, const ParamBundle& params, int agent_id) {
  return {encoder_forward(features, params, "key_enc").out, agent_id};
}

ComparableMap query_key_transform(const QueryMap& query, const ParamBundle& params,
                                  int supporting_id) {
  const auto& w = params.at("qk_transform.w").value;
  if (w.cols != query.q.channels)
    throw config_error("query_key_transform: query has " + std::to_string(query.q.channels) +
                       " channels but kernels expect " + std::to_string(w.cols));
  GridTensor p = conv2d_forward(query.q, w, GridTensor(), 1);
  return {std::move(p), query.agent_id, supporting_id};
}

GridTensor query_key_transform_backward(const GridTensor& q, const GridTensor& dp,
                                        ParamBundle& params) {
  auto& w = params.at("qk_transform.w");
  GridTensor no_bias;
  return conv2d_backward(dp, q, w.value, 1, w.grad, no_bias);
}

std::vector<std::uint8_t> serialize_query(const QueryMap& q, int bytes_per_scalar) {
  if (bytes_per_scalar != 4 && bytes_per_scalar != 8)
    throw config_error("serialize_query: wire scalars must be 4 or 8 bytes");
  std::vector<std::uint8_t> out;
  out.reserve(16 + q.q.size() * bytes_per_scalar);
  put_u32(out, static_cast<std::uint32_t>(q.agent_id));
  put_u32(out, static_cast<std::uint32_t>(q.q.rows));
  put_u32(out, static_cast<std::uint32_t>(q.q.cols));
  put_u32(out, static_cast<std::uint32_t>(q.q.channels));
  for (double v : q.q.data) {
    if (bytes_per_scalar == 4) {
      const float f = static_cast<float>(v);
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      put_u32(out, u);
    } else {
      std::uint64_t u;
      std::memcpy(&u, &v, 8);
      put_u32(out, static_cast<std::uint32_t>(u & 0xffffffffULL));
      put_u32(out, static_cast<std::uint32_t>(u >> 32));
    }
  }
  return out;
}

QueryMap deserialize_query(const std::vector<std::uint8_t>& bytes, int bytes_per_scalar) {
  std::size_t pos = 0;
  QueryMap q;
  q.agent_id = static_cast<int>(get_u32(bytes, pos));
  const int rows = static_cast<int>(get_u32(bytes, pos));
  const int cols = static_cast<int>(get_u32(bytes, pos));
  const int channels = static_cast<int>(get_u32(bytes, pos));
  q.q = GridTensor(rows, cols, channels);
  for (auto& v : q.q.data) {
    if (bytes_per_scalar == 4) {
      const std::uint32_t u = get_u32(bytes, pos);
      float f;
      std::memcpy(&f, &u, 4);
      v = static_cast<double>(f);
    } else {
      const std::uint64_t lo = get_u32(bytes, pos);
      const std::uint64_t hi = get_u32(bytes, pos);
      const std::uint64_t u = lo | (hi << 32);
      std::memcpy(&v, &u, 8);
    }
  }
  if (pos != bytes.size()) throw data_error("query message has trailing bytes");
  return q;
}

long long query_scalar_count(const ViewConfig& view, const ModelConfig& model) {
  return static_cast<long long>(view.feat_rows) * view.feat_cols * model.query_dim;
}

}  // namespace swarmseg

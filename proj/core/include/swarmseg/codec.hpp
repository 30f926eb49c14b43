#pragma once

#include <cstdint>
#include <vector>

#include "swarmseg/config.hpp"
#include "swarmseg/grid.hpp"
#include "swarmseg/params.hpp"

namespace swarmseg {

// Channel-compressed feature map broadcast by a target agent.
struct QueryMap {
  GridTensor q;  // H_s x W_s x Q
  int agent_id = -1;
};

// Channel-compressed feature map held locally by a supporting agent. K >= Q.
struct KeyMap {
  GridTensor k;  // H_s x W_s x K
  int agent_id = -1;
};

// Received query lifted to the key dimension on the supporting agent.
struct ComparableMap {
  GridTensor p;  // H_s x W_s x K
  int target_id = -1;
  int supporting_id = -1;
};

// Encoders are two 1x1 conv layers with a ReLU between (F -> F/2 -> Q|K);
// the query-key transform is a single bias-free 1x1 conv (Q -> K).
// Entry names: query_enc.conv{1,2}.{w,b}, key_enc.conv{1,2}.{w,b}, qk_transform.w.
void init_codec_params(ParamBundle& params, const ModelConfig& model, Rng& rng);

struct EncoderForward {
  GridTensor pre1, act1, out;
};

EncoderForward encoder_forward(const GridTensor& features, const ParamBundle& params,
                               const char* prefix);
// Accumulates encoder grads; returns dL/dfeatures.
GridTensor encoder_backward(const EncoderForward& fwd, const GridTensor& features,
                            const GridTensor& dout, ParamBundle& params, const char* prefix);

QueryMap encode_query(const GridTensor& features, const ParamBundle& params, int agent_id);
KeyMap encode_key(const GridTensor& features, const ParamBundle& params, int agent_id);

ComparableMap query_key_transform(const QueryMap& query, const ParamBundle& params,
                                  int supporting_id);
// Accumulates transform grads; returns dL/dq.
GridTensor query_key_transform_backward(const GridTensor& q, const GridTensor& dp,
                                        ParamBundle& params);

// Wire form of a query broadcast: u32 agent id, 3 x u32 shape, then raw
// little-endian scalars (float when bytes_per_scalar == 4, double when 8).
std::vector<std::uint8_t> serialize_query(const QueryMap& q, int bytes_per_scalar);
QueryMap deserialize_query(const std::vector<std::uint8_t>& bytes, int bytes_per_scalar);

long long query_scalar_count(const ViewConfig& view, const ModelConfig& model);

}  // namespace swarmseg

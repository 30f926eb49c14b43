#include <doctest.h>

#include "swarmseg/codec.hpp"
#include "swarmseg/conv.hpp"
#include "swarmseg/errors.hpp"
#include "test_util.hpp"

using namespace swarmseg;
using namespace testutil;

namespace {

ModelConfig tiny_model() {
  ModelConfig m;
  m.feature_dim = 6;
  m.query_dim = 3;
  m.key_dim = 4;
  return m;
}

}  // namespace

TEST_SUITE_BEGIN("codec");

TEST_CASE("encode_query / encode_key: shapes follow the channel contract") {
  Rng rng(11);
  const ModelConfig model = tiny_model();
  ParamBundle params;
  init_codec_params(params, model, rng);
  const GridTensor f = random_tensor(4, 5, model.feature_dim, rng);
  const QueryMap q = encode_query(f, params, 2);
  const KeyMap k = encode_key(f, params, 2);
  CHECK(q.q.rows == 4);
  CHECK(q.q.cols == 5);
  CHECK(q.q.channels == model.query_dim);
  CHECK(k.k.channels == model.key_dim);
  CHECK(q.agent_id == 2);
}

TEST_CASE("zero feature map encodes to the broadcast bias pattern") {
  Rng rng(12);
  const ModelConfig model = tiny_model();
  ParamBundle params;
  init_codec_params(params, model, rng);
  const GridTensor f(3, 3, model.feature_dim, 0.0);
  const QueryMap q = encode_query(f, params, 0);
  // With zero biases (the init default) a zero map stays zero through conv+relu.
  for (double v : q.q.data) CHECK(v == 0.0);
  // With a bias the output is that bias broadcast everywhere.
  params.at("query_enc.conv2.b").value.fill(0.25);
  params.at("query_enc.conv1.b").value.fill(0.0);
  const QueryMap qb = encode_query(f, params, 0);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      for (int ch = 0; ch < model.query_dim; ++ch) CHECK(qb.q.at(r, c, ch) == 0.25);
}

TEST_CASE("query_key_transform: identity kernels pass q through when Q == K") {
  Rng rng(13);
  ModelConfig model = tiny_model();
  model.query_dim = model.key_dim = 4;
  ParamBundle params;
  init_codec_params(params, model, rng);
  GridTensor& w = params.at("qk_transform.w").value;
  w.fill(0.0);
  for (int i = 0; i < 4; ++i) w.at(0, i, i) = 1.0;
  const QueryMap q{random_tensor(3, 3, 4, rng), 0};
  const ComparableMap p = query_key_transform(q, params, 1);
  CHECK(max_abs_diff(p.p, q.q) == 0.0);
  CHECK(p.target_id == 0);
  CHECK(p.supporting_id == 1);
}

TEST_CASE("query_key_transform: output channel dim is K; per-pixel matrix oracle") {
  Rng rng(14);
  const ModelConfig model = tiny_model();
  ParamBundle params;
  init_codec_params(params, model, rng);
  const QueryMap q{random_tensor(4, 4, model.query_dim, rng), 0};
  const ComparableMap p = query_key_transform(q, params, 1);
  CHECK(p.p.channels == model.key_dim);
  const GridTensor& w = params.at("qk_transform.w").value;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      for (int oc = 0; oc < model.key_dim; ++oc) {
        double expect = 0.0;
        for (int ic = 0; ic < model.query_dim; ++ic) expect += q.q.at(r, c, ic) * w.at(0, ic, oc);
        CHECK(p.p.at(r, c, oc) == doctest::Approx(expect).epsilon(1e-12));
      }
}

TEST_CASE("query_key_transform: channel mismatch raises a configuration error") {
  Rng rng(15);
  ParamBundle params;
  init_codec_params(params, tiny_model(), rng);
  const QueryMap q{random_tensor(3, 3, 5, rng), 0};  // trained for Q=3
  CHECK_THROWS_AS(query_key_transform(q, params, 1), config_error);
}

TEST_CASE("bandwidth monotonicity: serialized query scalar count grows with Q") {
  ViewConfig view;
  long long prev = -1;
  for (int q = 1; q <= 16; q *= 2) {
    ModelConfig model;
    model.query_dim = q;
    model.key_dim = 16;
    const long long n = query_scalar_count(view, model);
    CHECK(n == static_cast<long long>(view.feat_rows) * view.feat_cols * q);
    CHECK(n > prev);
    prev = n;
  }
}

TEST_CASE("query wire round-trip: exact at 8 bytes, float-rounded at 4") {
  Rng rng(16);
  const QueryMap q{random_tensor(4, 4, 3, rng), 7};
  const auto bytes8 = serialize_query(q, 8);
  const QueryMap q8 = deserialize_query(bytes8, 8);
  CHECK(q8.agent_id == 7);
  CHECK(q8.q.data == q.q.data);
  const auto bytes4 = serialize_query(q, 4);
  CHECK(bytes4.size() == 16 + q.q.size() * 4);
  const QueryMap q4 = deserialize_query(bytes4, 4);
  for (std::size_t i = 0; i < q.q.size(); ++i)
    CHECK(q4.q.data[i] == static_cast<double>(static_cast<float>(q.q.data[i])));
}

TEST_CASE("encoder and transform gradients pass the finite-difference check") {
  Rng rng(17);
  const ModelConfig model = tiny_model();
  ParamBundle params;
  init_codec_params(params, model, rng);
  GridTensor f = random_tensor(3, 4, model.feature_dim, rng);
  const GridTensor coeff = random_tensor(3, 4, model.key_dim, rng);
  auto loss_fn = [&]() {
    const EncoderForward qf = encoder_forward(f, params, "query_enc");
    const GridTensor p = conv2d_forward(qf.out, params.at("qk_transform.w").value, GridTensor(), 1);
    double l = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) l += 0.5 * coeff.data[i] * p.data[i] * p.data[i];
    return l;
  };
  const EncoderForward qf = encoder_forward(f, params, "query_enc");
  const GridTensor p = conv2d_forward(qf.out, params.at("qk_transform.w").value, GridTensor(), 1);
  GridTensor dp(3, 4, model.key_dim);
  for (std::size_t i = 0; i < p.size(); ++i) dp.data[i] = coeff.data[i] * p.data[i];
  const GridTensor dq = query_key_transform_backward(qf.out, dp, params);
  const GridTensor df = encoder_backward(qf, f, dq, params, "query_enc");
  auto rep = fd_check_params(params, loss_fn, {"query_enc.", "qk_transform."}, 1e-5, 24);
  INFO(rep.worst);
  CHECK(rep.max_rel < 1e-4);
  rep = fd_check_tensor(f, df, loss_fn);
  INFO(rep.worst);
  CHECK(rep.max_rel < 1e-4);
}

TEST_SUITE_END();

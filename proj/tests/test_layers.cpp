#include <cmath>

#include "doctest.h"
#include "fd_util.hpp"
#include "motionsel/layers.hpp"
#include "motionsel/rng.hpp"

using namespace motionsel;
using fdtest::check_grad;
using fdtest::dot_loss;
using fdtest::random_tensor;

namespace {

// Direct-definition convolution used as the oracle for the GEMM path.
TensorD conv_reference(const TensorD& in, const TensorD& w, const TensorD& b, int stride,
                       Padding pad, int oh, int ow) {
  TensorD out(in.b, w.b, oh, ow);
  for (int bi = 0; bi < in.b; ++bi)
    for (int o = 0; o < w.b; ++o)
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
          double acc = b.data[o];
          for (int i = 0; i < in.c; ++i)
            for (int u = 0; u < w.h; ++u)
              for (int v = 0; v < w.w; ++v) {
                int iy = y * stride + u - pad.top;
                int ix = x * stride + v - pad.left;
                if (iy >= 0 && iy < in.h && ix >= 0 && ix < in.w)
                  acc += in.at(bi, i, iy, ix) * w.at(o, i, u, v);
              }
          out.at(bi, o, y, x) = acc;
        }
  return out;
}

// Direct-definition transposed convolution (scatter form).
TensorD deconv_reference(const TensorD& in, const TensorD& w, const TensorD& b, int stride,
                         Padding pad, int oh, int ow) {
  TensorD out(in.b, w.c, oh, ow);
  for (int bi = 0; bi < in.b; ++bi)
    for (int o = 0; o < w.c; ++o)
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) out.at(bi, o, y, x) = b.data[o];
  for (int bi = 0; bi < in.b; ++bi)
    for (int i = 0; i < in.c; ++i)
      for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < in.w; ++x)
          for (int o = 0; o < w.c; ++o)
            for (int u = 0; u < w.h; ++u)
              for (int v = 0; v < w.w; ++v) {
                int oy = y * stride + u - pad.top;
                int ox = x * stride + v - pad.left;
                if (oy >= 0 && oy < oh && ox >= 0 && ox < ow)
                  out.at(bi, o, oy, ox) += in.at(bi, i, y, x) * w.at(i, o, u, v);
              }
  return out;
}

}  // namespace

TEST_CASE("same padding geometry matches the ceil-mode convention") {
  CHECK(conv_out_size(64, 2) == 32);
  CHECK(conv_out_size(101, 2) == 51);
  CHECK(conv_out_size(25, 1) == 25);

  Padding p = same_padding(64, 64, 4, 4, 2);
  CHECK(p.top == 1);
  CHECK(p.left == 1);
  p = same_padding(101, 320, 4, 4, 2);
  CHECK(p.top == 1);  // total 3: one before, two after
  CHECK(p.left == 1);
  p = same_padding(200, 25, 5, 5, 2);
  CHECK(p.top == 1);  // total 3
  CHECK(p.left == 2);  // total 4
  p = same_padding(10, 10, 5, 5, 1);
  CHECK(p.top == 2);
  CHECK(p.left == 2);
}

TEST_CASE("conv2d matches the direct definition") {
  Rng rng(11);
  for (auto [k, s] : {std::pair{4, 2}, std::pair{5, 1}, std::pair{5, 2}}) {
    TensorD in = random_tensor(2, 3, 7, 6, rng);
    TensorD w = random_tensor(4, 3, k, k, rng, 0.3);
    TensorD b = random_tensor(1, 4, 1, 1, rng);
    int oh = conv_out_size(7, s), ow = conv_out_size(6, s);
    Padding pad = same_padding(7, 6, k, k, s);
    TensorD got = conv2d_forward(in, w, b, s, pad, oh, ow, static_cast<ConvCache<double>*>(nullptr));
    TensorD want = conv_reference(in, w, b, s, pad, oh, ow);
    for (size_t i = 0; i < got.data.size(); ++i)
      CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-10));
  }
}

TEST_CASE("conv2d gradients agree with finite differences") {
  Rng rng(12);
  TensorD in = random_tensor(2, 2, 6, 5, rng);
  TensorD w = random_tensor(3, 2, 4, 4, rng, 0.3);
  TensorD b = random_tensor(1, 3, 1, 1, rng);
  TensorD probe = random_tensor(2, 3, 3, 3, rng);

  auto loss = [&] {
    return dot_loss(conv2d_same(in, w, b, 2, static_cast<ConvCache<double>*>(nullptr)), probe);
  };
  ConvCache<double> cache;
  conv2d_same(in, w, b, 2, &cache);
  TensorD dw = TensorD::zeros_like(w), db = TensorD::zeros_like(b);
  TensorD din = conv2d_backward(probe, w, cache, dw, db);
  check_grad(loss, in, din, "conv dIn");
  check_grad(loss, w, dw, "conv dW");
  check_grad(loss, b, db, "conv dBias");
}

TEST_CASE("deconv2d matches the direct definition for both target parities") {
  Rng rng(13);
  TensorD in = random_tensor(2, 3, 4, 5, rng);
  TensorD w = random_tensor(3, 2, 4, 4, rng, 0.3);
  TensorD b = random_tensor(1, 2, 1, 1, rng);
  Padding pad{1, 1};
  for (auto [oh, ow] : {std::pair{8, 10}, std::pair{7, 9}}) {
    TensorD got =
        deconv2d_forward(in, w, b, 2, pad, oh, ow, static_cast<DeconvCache<double>*>(nullptr));
    TensorD want = deconv_reference(in, w, b, 2, pad, oh, ow);
    for (size_t i = 0; i < got.data.size(); ++i)
      CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-10));
  }
}

TEST_CASE("deconv2d gradients agree with finite differences") {
  Rng rng(14);
  TensorD in = random_tensor(2, 2, 3, 4, rng);
  TensorD w = random_tensor(2, 3, 4, 4, rng, 0.3);
  TensorD b = random_tensor(1, 3, 1, 1, rng);
  Padding pad{1, 1};
  int oh = 5, ow = 8;  // odd-height target exercises the trim path
  TensorD probe = random_tensor(2, 3, oh, ow, rng);

  auto loss = [&] {
    return dot_loss(
        deconv2d_forward(in, w, b, 2, pad, oh, ow, static_cast<DeconvCache<double>*>(nullptr)),
        probe);
  };
  DeconvCache<double> cache;
  deconv2d_forward(in, w, b, 2, pad, oh, ow, &cache);
  TensorD dw = TensorD::zeros_like(w), db = TensorD::zeros_like(b);
  TensorD din = deconv2d_backward(probe, w, cache, dw, db);
  check_grad(loss, in, din, "deconv dIn");
  check_grad(loss, w, dw, "deconv dW");
  check_grad(loss, b, db, "deconv dBias");
}

TEST_CASE("instance norm normalizes per plane and backprops correctly") {
  Rng rng(15);
  TensorD in = random_tensor(2, 3, 4, 5, rng, 2.0);
  TensorD gamma = random_tensor(1, 3, 1, 1, rng, 0.5);
  TensorD beta = random_tensor(1, 3, 1, 1, rng, 0.5);
  for (auto& g : gamma.data) g += 1.0;
  double eps = 1e-5;

  NormCache<double> cache;
  TensorD out = instance_norm_forward(in, gamma, beta, eps, &cache);
  for (int bi = 0; bi < 2; ++bi)
    for (int ci = 0; ci < 3; ++ci) {
      double mean = 0.0;
      for (int i = 0; i < 20; ++i) mean += cache.xhat.plane(bi, ci)[i];
      CHECK(std::abs(mean / 20) < 1e-12);
    }

  TensorD probe = random_tensor(2, 3, 4, 5, rng);
  auto loss = [&] {
    NormCache<double> c;
    return dot_loss(instance_norm_forward(in, gamma, beta, eps, &c), probe);
  };
  TensorD dg = TensorD::zeros_like(gamma), db = TensorD::zeros_like(beta);
  TensorD din = instance_norm_backward(probe, gamma, cache, dg, db);
  check_grad(loss, in, din, "in dIn", 1e-5, 1e-4);
  check_grad(loss, gamma, dg, "in dGamma");
  check_grad(loss, beta, db, "in dBeta");
}

TEST_CASE("batch norm: training stats, running-average update, eval path") {
  Rng rng(16);
  TensorD in = random_tensor(3, 2, 4, 4, rng, 2.0);
  TensorD gamma(1, 2, 1, 1), beta(1, 2, 1, 1);
  gamma.fill(1.2);
  beta.fill(-0.3);
  TensorD rmean(1, 2, 1, 1), rvar(1, 2, 1, 1);
  rmean.fill(0.5);
  rvar.fill(2.0);
  double momentum = 0.9, eps = 1e-5;

  // batch statistics by hand for channel 0
  double mean = 0.0, var = 0.0;
  for (int bi = 0; bi < 3; ++bi)
    for (int i = 0; i < 16; ++i) mean += in.plane(bi, 0)[i];
  mean /= 48;
  for (int bi = 0; bi < 3; ++bi)
    for (int i = 0; i < 16; ++i) {
      double d = in.plane(bi, 0)[i] - mean;
      var += d * d;
    }
  var /= 48;

  NormCache<double> cache;
  TensorD out =
      batch_norm_forward(in, gamma, beta, rmean, rvar, true, true, momentum, eps, &cache);
  CHECK(out.at(0, 0, 0, 0) ==
        doctest::Approx(1.2 * (in.at(0, 0, 0, 0) - mean) / std::sqrt(var + eps) - 0.3));
  CHECK(rmean.data[0] == doctest::Approx(0.9 * 0.5 + 0.1 * mean));
  CHECK(rvar.data[0] == doctest::Approx(0.9 * 2.0 + 0.1 * var));

  // update_running=false leaves the running stats untouched
  double keep_mean = rmean.data[0], keep_var = rvar.data[0];
  batch_norm_forward(in, gamma, beta, rmean, rvar, true, false, momentum, eps,
                     static_cast<NormCache<double>*>(nullptr));
  CHECK(rmean.data[0] == keep_mean);
  CHECK(rvar.data[0] == keep_var);

  // eval mode uses the running statistics
  NormCache<double> ecache;
  TensorD eout =
      batch_norm_forward(in, gamma, beta, rmean, rvar, false, false, momentum, eps, &ecache);
  CHECK(eout.at(1, 0, 2, 2) ==
        doctest::Approx(1.2 * (in.at(1, 0, 2, 2) - rmean.data[0]) / std::sqrt(rvar.data[0] + eps) -
                        0.3));

  TensorD probe = random_tensor(3, 2, 4, 4, rng);
  // training-mode gradients
  {
    auto loss = [&] {
      NormCache<double> c;
      return dot_loss(
          batch_norm_forward(in, gamma, beta, rmean, rvar, true, false, momentum, eps, &c), probe);
    };
    TensorD dg = TensorD::zeros_like(gamma), db = TensorD::zeros_like(beta);
    NormCache<double> c;
    batch_norm_forward(in, gamma, beta, rmean, rvar, true, false, momentum, eps, &c);
    TensorD din = batch_norm_backward(probe, gamma, c, dg, db);
    check_grad(loss, in, din, "bn-train dIn", 1e-5, 1e-4);
    check_grad(loss, gamma, dg, "bn-train dGamma");
    check_grad(loss, beta, db, "bn-train dBeta");
  }
  // eval-mode gradients (the frozen-statistics path used by rollout training)
  {
    auto loss = [&] {
      NormCache<double> c;
      return dot_loss(
          batch_norm_forward(in, gamma, beta, rmean, rvar, false, false, momentum, eps, &c), probe);
    };
    TensorD dg = TensorD::zeros_like(gamma), db = TensorD::zeros_like(beta);
    TensorD din = batch_norm_backward(probe, gamma, ecache, dg, db);
    check_grad(loss, in, din, "bn-eval dIn");
    check_grad(loss, gamma, dg, "bn-eval dGamma");
    check_grad(loss, beta, db, "bn-eval dBeta");
  }
}

TEST_CASE("dense layer forward and gradients") {
  Rng rng(17);
  TensorD in = random_tensor(3, 5, 1, 1, rng);
  TensorD w = random_tensor(4, 5, 1, 1, rng, 0.5);
  TensorD b = random_tensor(1, 4, 1, 1, rng);
  DenseCache<double> cache;
  TensorD out = dense_forward(in, w, b, &cache);
  double want = b.data[2];
  for (int i = 0; i < 5; ++i) want += in.data[5 + i] * w.at(2, i, 0, 0);
  CHECK(out.at(1, 2, 0, 0) == doctest::Approx(want));

  TensorD probe = random_tensor(3, 4, 1, 1, rng);
  auto loss = [&] {
    return dot_loss(dense_forward(in, w, b, static_cast<DenseCache<double>*>(nullptr)), probe);
  };
  TensorD dw = TensorD::zeros_like(w), db = TensorD::zeros_like(b);
  TensorD din = dense_backward(probe, w, cache, dw, db);
  check_grad(loss, in, din, "dense dIn");
  check_grad(loss, w, dw, "dense dW");
  check_grad(loss, b, db, "dense dBias");
}

TEST_CASE("activations and their derivatives") {
  Rng rng(18);
  TensorD in = random_tensor(2, 2, 3, 3, rng);
  for (auto& v : in.data)
    if (std::abs(v) < 0.05) v = 0.2;  // keep clear of the relu kink
  TensorD probe = random_tensor(2, 2, 3, 3, rng);

  auto rloss = [&] { return dot_loss(relu_forward(in), probe); };
  TensorD rin = relu_backward(probe, in);
  check_grad(rloss, in, rin, "relu dIn");

  TensorD tout = tanh_forward(in);
  auto tloss = [&] { return dot_loss(tanh_forward(in), probe); };
  TensorD tin = tanh_backward(probe, tout);
  check_grad(tloss, in, tin, "tanh dIn");
}

TEST_CASE("row softmax sums to one and backprops") {
  Rng rng(19);
  TensorD in = random_tensor(2, 1, 3, 5, rng, 2.0);
  TensorD out = row_softmax_forward(in);
  for (int bi = 0; bi < 2; ++bi)
    for (int r = 0; r < 3; ++r) {
      double s = 0.0;
      for (int i = 0; i < 5; ++i) s += out.at(bi, 0, r, i);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }

  // invariance to a large common shift (the max-subtraction guard)
  TensorD shifted = in;
  for (auto& v : shifted.data) v += 500.0;
  TensorD out2 = row_softmax_forward(shifted);
  for (size_t i = 0; i < out.data.size(); ++i)
    CHECK(out.data[i] == doctest::Approx(out2.data[i]).epsilon(1e-12));

  TensorD probe = random_tensor(2, 1, 3, 5, rng);
  auto loss = [&] { return dot_loss(row_softmax_forward(in), probe); };
  TensorD din = row_softmax_backward(probe, out);
  check_grad(loss, in, din, "softmax dIn");
}

TEST_CASE("flatten round-trips") {
  Rng rng(20);
  TensorD in = random_tensor(2, 3, 4, 5, rng);
  TensorD flat = flatten(in);
  CHECK(flat.c == 60);
  TensorD back = unflatten(flat, 3, 4, 5);
  CHECK(back.data == in.data);
  CHECK_THROWS_AS(unflatten(flat, 3, 4, 4), ArgumentError);
}

#include <cmath>

#include "doctest.h"
#include "fd_util.hpp"
#include "motionsel/losses.hpp"
#include "motionsel/video_io.hpp"

using namespace motionsel;
using fdtest::random_tensor;

TEST_CASE("l1 loss matches its closed forms") {
  TensorD gt(1, 1, 4, 4);
  gt.fill(0.25);
  TensorD pred = gt;
  CHECK(l1_loss(pred, gt) == 0.0);

  for (auto& v : pred.data) v += 0.5;
  CHECK(l1_loss(pred, gt) == doctest::Approx(0.5).epsilon(1e-12));

  pred = gt;
  for (auto& v : pred.data) v = -v;
  CHECK(l1_loss(pred, gt) == doctest::Approx(0.5).epsilon(1e-12));

  TensorD other(1, 1, 4, 5);
  CHECK_THROWS_AS(l1_loss(pred, other), ArgumentError);
}

TEST_CASE("motion loss compares absolute temporal increments") {
  Rng rng(41);
  TensorD gt_prev = random_tensor(1, 1, 3, 3, rng);
  TensorD gt_t = random_tensor(1, 1, 3, 3, rng);
  CHECK(motion_loss(gt_t, gt_prev, gt_t, gt_prev) == 0.0);

  // static prediction against a constant ground-truth increment of c
  TensorD pred(1, 1, 3, 3);
  pred.fill(0.1);
  TensorD gtp(1, 1, 3, 3), gtt(1, 1, 3, 3);
  gtp.fill(0.2);
  gtt.fill(0.2 - 0.35);
  CHECK(motion_loss(pred, pred, gtt, gtp) == doctest::Approx(0.35).epsilon(1e-12));

  // sign-flipped increments of equal magnitude cancel
  TensorD pp(1, 1, 3, 3), pt(1, 1, 3, 3);
  pp.fill(0.0);
  pt.fill(0.35);  // predicted increment +0.35, ground truth -0.35
  CHECK(motion_loss(pt, pp, gtt, gtp) == doctest::Approx(0.0));
}

TEST_CASE("sequence loss aggregates terms per the objective") {
  Rng rng(42);
  LossConfig cfg;
  cfg.mu_motion = 10.0;

  std::vector<TensorD> preds, gts;
  for (int t = 0; t < 3; ++t) {
    preds.push_back(random_tensor(1, 1, 2, 2, rng));
    gts.push_back(random_tensor(1, 1, 2, 2, rng));
  }

  // independent scalar evaluation of the same objective
  double want = 0.0;
  for (int t = 0; t < 3; ++t) {
    double s = 0.0;
    for (int i = 0; i < 4; ++i) s += std::abs(preds[t].data[i] - gts[t].data[i]);
    want += s / 4.0;
    if (t > 0) {
      double m = 0.0;
      for (int i = 0; i < 4; ++i)
        m += std::abs(std::abs(preds[t].data[i] - preds[t - 1].data[i]) -
                      std::abs(gts[t].data[i] - gts[t - 1].data[i]));
      want += cfg.mu_motion * m / 4.0;
    }
  }
  LossBreakdown<double> got = sequence_loss(preds, gts, cfg);
  CHECK(got.total == doctest::Approx(want).epsilon(1e-12));
  CHECK(got.total >= 0.0);

  // single prediction: pure reconstruction
  std::vector<TensorD> one_p{preds[0]}, one_g{gts[0]};
  LossBreakdown<double> single = sequence_loss(one_p, one_g, cfg);
  CHECK(single.motion == 0.0);
  CHECK(single.total == doctest::Approx(l1_loss(preds[0], gts[0])));

  // zero motion weight reduces to summed L1
  LossConfig mu0;
  mu0.mu_motion = 0.0;
  LossBreakdown<double> plain = sequence_loss(preds, gts, mu0);
  double l1_sum = 0.0;
  for (int t = 0; t < 3; ++t) l1_sum += l1_loss(preds[t], gts[t]);
  CHECK(plain.total == doctest::Approx(l1_sum).epsilon(1e-12));

  std::vector<TensorD> short_g{gts[0], gts[1]};
  CHECK_THROWS_AS(sequence_loss(preds, short_g, cfg), ArgumentError);
}

TEST_CASE("sequence loss is invariant under a consistent horizontal flip") {
  Rng rng(43);
  LossConfig cfg;
  auto mirror = [](const TensorD& f) {
    TensorD out(f.b, f.c, f.h, f.w);
    for (int bi = 0; bi < f.b; ++bi)
      for (int c = 0; c < f.c; ++c)
        for (int y = 0; y < f.h; ++y)
          for (int x = 0; x < f.w; ++x) out.at(bi, c, y, x) = f.at(bi, c, y, f.w - 1 - x);
    return out;
  };
  std::vector<TensorD> preds, gts, fpreds, fgts;
  for (int t = 0; t < 4; ++t) {
    preds.push_back(random_tensor(2, 3, 5, 6, rng));
    gts.push_back(random_tensor(2, 3, 5, 6, rng));
    fpreds.push_back(mirror(preds.back()));
    fgts.push_back(mirror(gts.back()));
  }
  double a = sequence_loss(preds, gts, cfg).total;
  double b = sequence_loss(fpreds, fgts, cfg).total;
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(44);
  LossConfig cfg;
  cfg.mu_motion = 3.0;
  std::vector<TensorD> preds, gts;
  for (int t = 0; t < 3; ++t) {
    preds.push_back(random_tensor(1, 2, 3, 3, rng));
    gts.push_back(random_tensor(1, 2, 3, 3, rng));
  }

  std::vector<TensorD> dpreds;
  sequence_loss(preds, gts, cfg, &dpreds);
  REQUIRE(dpreds.size() == 3);

  for (int t = 0; t < 3; ++t) {
    auto loss = [&] { return static_cast<double>(sequence_loss(preds, gts, cfg).total); };
    fdtest::check_grad(loss, preds[t], dpreds[t], "sequence dpred[" + std::to_string(t) + "]",
                       1e-6, 1e-5);
  }
}

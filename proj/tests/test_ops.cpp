#include <gtest/gtest.h>

#include <cmath>

#include "spikeflow/ops.hpp"
#include "testing_util.hpp"

using namespace spikeflow;
using sft::expect_gradients_match;
using sft::expect_tensors_near;
using sft::make_random;

TEST(Elementwise, ValuesAndGradients) {
  Tensor a = make_random(Shape{2, 3}, 11, 0.2, 1.5, true);
  Tensor b = make_random(Shape{2, 3}, 12, -1.5, -0.2, true);

  expect_tensors_near(add(a, b), Tensor(Shape{2, 3}, [&] {
                        std::vector<double> v(6);
                        for (int i = 0; i < 6; ++i) v[i] = a.values()[i] + b.values()[i];
                        return v;
                      }()));

  expect_gradients_match([&] { return sum(mul(add(a, b), sub(a, b))); }, {a, b});
  expect_gradients_match([&] { return sum(abs(b)); }, {b});
  expect_gradients_match([&] { return sum(leaky_relu(mul(a, b), 0.1)); }, {a, b});
  expect_gradients_match([&] { return sum(add_scalar(scale(a, -2.5), 1.0)); }, {a});
}

TEST(Elementwise, ShapeMismatchThrows) {
  Tensor a(Shape{2, 3}, 1.0);
  Tensor b(Shape{3, 2}, 1.0);
  EXPECT_THROW(add(a, b), DimensionError);
  EXPECT_THROW(mul(a, b), DimensionError);
}

TEST(LeakyRelu, NegativeSlopeApplied) {
  Tensor a(Shape{4}, {-2.0, -0.5, 0.5, 2.0});
  Tensor y = leaky_relu(a, 0.1);
  EXPECT_DOUBLE_EQ(y(0), -0.2);
  EXPECT_DOUBLE_EQ(y(1), -0.05);
  EXPECT_DOUBLE_EQ(y(2), 0.5);
  EXPECT_DOUBLE_EQ(y(3), 2.0);
}

TEST(Reshape, PreservesValuesAndGradients) {
  Tensor a = make_random(Shape{2, 6}, 21, -1.0, 1.0, true);
  Tensor r = reshape(a, Shape{3, 4});
  EXPECT_EQ(r.shape(), (Shape{3, 4}));
  EXPECT_DOUBLE_EQ(r(2, 3), a(1, 5));
  EXPECT_THROW(reshape(a, Shape{5, 2}), DimensionError);

  Tensor w = make_random(Shape{3, 4}, 22);
  expect_gradients_match([&] { return sum(mul(reshape(a, Shape{3, 4}), w)); }, {a});
}

TEST(Slice, CopiesBlockAndRoutesGradients) {
  Tensor a(Shape{2, 3, 4}, 0.0, true);
  for (std::size_t i = 0; i < a.numel(); ++i) a.mutable_values()[i] = static_cast<double>(i);
  Tensor s = slice(a, {1, 1, 2}, Shape{1, 2, 2});
  EXPECT_EQ(s.shape(), (Shape{1, 2, 2}));
  EXPECT_DOUBLE_EQ(s(0, 0, 0), a(1, 1, 2));
  EXPECT_DOUBLE_EQ(s(0, 1, 1), a(1, 2, 3));

  EXPECT_THROW(slice(a, {1, 1, 3}, Shape{1, 2, 2}), DimensionError);
  EXPECT_THROW(slice(a, {0, 0}, Shape{1, 1}), DimensionError);

  Tensor w = make_random(Shape{1, 2, 2}, 31);
  expect_gradients_match([&] { return sum(mul(slice(a, {1, 1, 2}, Shape{1, 2, 2}), w)); }, {a});
}

TEST(Concat, JoinsAlongAxisAndSplitsGradients) {
  Tensor a = make_random(Shape{1, 2, 2, 2}, 41, -1.0, 1.0, true);
  Tensor b = make_random(Shape{1, 3, 2, 2}, 42, -1.0, 1.0, true);
  Tensor c = concat({a, b}, 1);
  EXPECT_EQ(c.shape(), (Shape{1, 5, 2, 2}));
  EXPECT_DOUBLE_EQ(c(0, 1, 1, 0), a(0, 1, 1, 0));
  EXPECT_DOUBLE_EQ(c(0, 2, 0, 1), b(0, 0, 0, 1));
  EXPECT_DOUBLE_EQ(c(0, 4, 1, 1), b(0, 2, 1, 1));

  Tensor bad(Shape{1, 3, 2, 3}, 0.0);
  EXPECT_THROW(concat({a, bad}, 1), DimensionError);
  EXPECT_THROW(concat({a, b}, 4), DimensionError);
  EXPECT_THROW(concat({}, 0), ContractError);

  Tensor w = make_random(Shape{1, 5, 2, 2}, 43);
  expect_gradients_match([&] { return sum(mul(concat({a, b}, 1), w)); }, {a, b});
}

TEST(AvgPool, HalvesResolution) {
  Tensor a(Shape{1, 1, 2, 4}, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0});
  Tensor p = avg_pool2x2(a);
  EXPECT_EQ(p.shape(), (Shape{1, 1, 1, 2}));
  EXPECT_DOUBLE_EQ(p(0, 0, 0, 0), 3.5);
  EXPECT_DOUBLE_EQ(p(0, 0, 0, 1), 5.5);

  Tensor odd(Shape{1, 1, 3, 4}, 0.0);
  EXPECT_THROW(avg_pool2x2(odd), ContractError);

  Tensor x = make_random(Shape{2, 2, 4, 4}, 51, -1.0, 1.0, true);
  Tensor w = make_random(Shape{2, 2, 2, 2}, 52);
  expect_gradients_match([&] { return sum(mul(avg_pool2x2(x), w)); }, {x});
}

TEST(Conv2d, HandComputedNeighborhoodSums) {
  // 3x3 ramp image, all-ones 3x3 kernel, stride 1, padding 1: each output is
  // the sum of the in-bounds 3x3 neighborhood.
  Tensor img(Shape{1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor ones(Shape{1, 1, 3, 3}, 1.0);
  Tensor y = conv2d(img, ones, 1, 1);
  const std::vector<double> expected = {12, 21, 16, 27, 45, 33, 24, 39, 28};
  expect_tensors_near(y, Tensor(Shape{1, 1, 3, 3}, expected));

  // A kernel that only has its center tap set reproduces the input.
  Tensor center(Shape{1, 1, 3, 3}, 0.0);
  center.at(0, 0, 1, 1) = 1.0;
  expect_tensors_near(conv2d(img, center, 1, 1), img);
}

TEST(Conv2d, MatchesPaddedReference) {
  struct Case {
    Shape in, w;
    std::size_t stride, padding;
  };
  const Case cases[] = {
      {{2, 3, 8, 8}, {4, 3, 3, 3}, 1, 1},
      {{1, 2, 9, 7}, {3, 2, 3, 3}, 2, 1},
      {{1, 1, 5, 5}, {2, 1, 5, 5}, 1, 2},
      {{2, 4, 6, 6}, {4, 4, 1, 1}, 1, 0},
      {{1, 2, 10, 10}, {2, 2, 3, 3}, 3, 1},
  };
  unsigned seed = 61;
  for (const Case& c : cases) {
    Tensor x = make_random(c.in, seed++);
    Tensor w = make_random(c.w, seed++);
    expect_tensors_near(conv2d(x, w, c.stride, c.padding),
                        sft::conv2d_reference(x, w, c.stride, c.padding), 1e-11);
  }
}

TEST(Conv2d, Gradients) {
  Tensor x = make_random(Shape{1, 2, 5, 5}, 71, -1.0, 1.0, true);
  Tensor w = make_random(Shape{3, 2, 3, 3}, 72, -1.0, 1.0, true);
  Tensor m = make_random(Shape{1, 3, 3, 3}, 73);
  expect_gradients_match([&] { return sum(mul(conv2d(x, w, 2, 1), m)); }, {x, w});
}

TEST(Conv2d, RejectsBadArguments) {
  Tensor x(Shape{1, 2, 5, 5}, 1.0);
  Tensor w_even(Shape{1, 2, 2, 2}, 1.0);
  Tensor w_chan(Shape{1, 3, 3, 3}, 1.0);
  Tensor w_ok(Shape{1, 2, 3, 3}, 1.0);
  EXPECT_THROW(conv2d(x, w_even, 1, 0), ContractError);
  EXPECT_THROW(conv2d(x, w_chan, 1, 0), DimensionError);
  EXPECT_THROW(conv2d(x, w_ok, 0, 0), ContractError);
  EXPECT_THROW(conv2d(reshape(x, Shape{2, 5, 5}), w_ok, 1, 0), DimensionError);
  Tensor tiny(Shape{1, 2, 2, 2}, 1.0);
  EXPECT_THROW(conv2d(tiny, w_ok, 1, 0), ContractError);
}

TEST(ConvTranspose2d, HandComputedOverlapCounts) {
  // 2x2 ones through a 3x3 ones kernel at stride 2: each output pixel counts
  // how many kernel footprints cover it; the centre is covered by all four.
  Tensor x(Shape{1, 1, 2, 2}, 1.0);
  Tensor w(Shape{1, 1, 3, 3}, 1.0);
  Tensor y = conv_transpose2d(x, w, 2, 0);
  const std::vector<double> expected = {
      1, 1, 2, 1, 1,
      1, 1, 2, 1, 1,
      2, 2, 4, 2, 2,
      1, 1, 2, 1, 1,
      1, 1, 2, 1, 1,
  };
  expect_tensors_near(y, Tensor(Shape{1, 1, 5, 5}, expected));
}

TEST(ConvTranspose2d, MatchesPaintedReference) {
  struct Case {
    Shape in, w;
    std::size_t stride, padding;
  };
  const Case cases[] = {
      {{1, 3, 4, 4}, {3, 2, 4, 4}, 2, 1},
      {{2, 2, 3, 5}, {2, 3, 3, 3}, 1, 1},
      {{1, 1, 3, 3}, {1, 1, 3, 3}, 3, 0},
      {{1, 4, 2, 2}, {4, 1, 4, 4}, 2, 1},
  };
  unsigned seed = 81;
  for (const Case& c : cases) {
    Tensor x = make_random(c.in, seed++);
    Tensor w = make_random(c.w, seed++);
    expect_tensors_near(conv_transpose2d(x, w, c.stride, c.padding),
                        sft::conv_transpose2d_reference(x, w, c.stride, c.padding), 1e-11);
  }
}

TEST(ConvTranspose2d, Gradients) {
  Tensor x = make_random(Shape{1, 2, 3, 3}, 91, -1.0, 1.0, true);
  Tensor w = make_random(Shape{2, 3, 4, 4}, 92, -1.0, 1.0, true);
  Tensor m = make_random(Shape{1, 3, 6, 6}, 93);
  expect_gradients_match([&] { return sum(mul(conv_transpose2d(x, w, 2, 1), m)); }, {x, w});
}

// <conv2d(x, w), y> == <x, conv_transpose2d(y, w)> makes the transposed conv
// the exact adjoint of the forward conv. The inner products line up when the
// transposed output has x's shape (stride divides the padded extent exactly),
// and also under zero padding when the conv's floor division drops trailing
// rows/columns: those are never read, so the adjoint is zero there and the
// sum over the overlap is the full identity.
TEST(ConvTranspose2d, IsAdjointOfConv2d) {
  struct Case {
    Shape in, w;
    std::size_t stride, padding;
  };
  const Case cases[] = {
      {{1, 1, 4, 4}, {1, 1, 3, 3}, 2, 0},  // floor drops the last row/column
      {{2, 3, 9, 9}, {4, 3, 3, 3}, 2, 1},  // exact: (9+2-3) divisible by 2
      {{2, 3, 8, 8}, {4, 3, 3, 3}, 2, 0},
      {{1, 2, 7, 5}, {3, 2, 5, 3}, 3, 2},
      {{1, 1, 6, 6}, {2, 1, 3, 3}, 1, 1},
  };
  unsigned seed = 101;
  for (const Case& c : cases) {
    Tensor x = make_random(c.in, seed++);
    Tensor w = make_random(c.w, seed++);
    Tensor cx = conv2d(x, w, c.stride, c.padding);
    Tensor y = make_random(cx.shape(), seed++);
    Tensor z = conv_transpose2d(y, w, c.stride, c.padding);
    ASSERT_LE(z.dim(2), x.dim(2));
    ASSERT_LE(z.dim(3), x.dim(3));

    double lhs = 0.0;
    for (std::size_t i = 0; i < cx.numel(); ++i) lhs += cx.values()[i] * y.values()[i];
    double rhs = 0.0;
    for (std::size_t b = 0; b < x.dim(0); ++b)
      for (std::size_t ch = 0; ch < x.dim(1); ++ch)
        for (std::size_t yy = 0; yy < z.dim(2); ++yy)
          for (std::size_t xx = 0; xx < z.dim(3); ++xx)
            rhs += x(b, ch, yy, xx) * z(b, ch, yy, xx);
    EXPECT_NEAR(lhs, rhs, 1e-9 * std::max(1.0, std::fabs(lhs)));
  }
}

TEST(ConvTranspose2d, RejectsBadArguments) {
  Tensor x(Shape{1, 2, 3, 3}, 1.0);
  Tensor w_chan(Shape{3, 2, 3, 3}, 1.0);
  Tensor w_ok(Shape{2, 2, 3, 3}, 1.0);
  EXPECT_THROW(conv_transpose2d(x, w_chan, 1, 0), DimensionError);
  EXPECT_THROW(conv_transpose2d(x, w_ok, 0, 0), ContractError);
  Tensor one(Shape{1, 1, 1, 1}, 1.0);
  Tensor w_big_pad(Shape{1, 1, 3, 3}, 1.0);
  EXPECT_THROW(conv_transpose2d(one, w_big_pad, 1, 2), ContractError);
}

TEST(BilinearSample, ExactAndInterpolatedLookups) {
  // 2x3 image, values row-major 1..6.
  Tensor img(Shape{1, 1, 2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor cx(Shape{1, 1, 4}, {0.0, 2.0, 0.5, 1.0});
  Tensor cy(Shape{1, 1, 4}, {0.0, 1.0, 0.0, 0.5});
  Tensor out = bilinear_sample(img, cx, cy);
  EXPECT_EQ(out.shape(), (Shape{1, 1, 1, 4}));
  EXPECT_DOUBLE_EQ(out(0, 0, 0, 0), 1.0);  // integer corner
  EXPECT_DOUBLE_EQ(out(0, 0, 0, 1), 6.0);  // opposite corner
  EXPECT_DOUBLE_EQ(out(0, 0, 0, 2), 1.5);  // halfway along the top row
  EXPECT_DOUBLE_EQ(out(0, 0, 0, 3), 3.5);  // halfway between rows at x=1
}

TEST(BilinearSample, ClampsToBorder) {
  Tensor img(Shape{1, 1, 2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor cx(Shape{1, 1, 3}, {-0.7, 5.0, -2.0});
  Tensor cy(Shape{1, 1, 3}, {0.0, 1.0, 9.0});
  Tensor out = bilinear_sample(img, cx, cy);
  EXPECT_DOUBLE_EQ(out(0, 0, 0, 0), 1.0);  // clamped to column 0
  EXPECT_DOUBLE_EQ(out(0, 0, 0, 1), 6.0);  // clamped to column 2
  EXPECT_DOUBLE_EQ(out(0, 0, 0, 2), 4.0);  // clamped to bottom-left corner
}

TEST(BilinearSample, Gradients) {
  Tensor img = make_random(Shape{1, 2, 4, 5}, 111, 0.0, 1.0, true);
  // Coordinates sit strictly inside the image and away from integer kinks.
  Tensor cx(Shape{1, 2, 2}, {0.3, 1.7, 2.4, 3.6}, true);
  Tensor cy(Shape{1, 2, 2}, {0.6, 2.3, 1.2, 2.8}, true);
  Tensor m = make_random(Shape{1, 2, 2, 2}, 112);
  expect_gradients_match([&] { return sum(mul(bilinear_sample(img, cx, cy), m)); },
                         {img, cx, cy});
}

TEST(BilinearSample, ClampedCoordinatesGetZeroGradient) {
  Tensor img = make_random(Shape{1, 1, 3, 3}, 121, 0.0, 1.0, true);
  Tensor cx(Shape{1, 1, 2}, {-0.5, 1.3}, true);
  Tensor cy(Shape{1, 1, 2}, {1.2, 3.8}, true);
  GradTape tape;
  TapeScope scope(tape);
  Tensor loss = sum(bilinear_sample(img, cx, cy));
  tape.backward(loss);
  EXPECT_DOUBLE_EQ(cx.grad()[0], 0.0);  // x clamped left
  EXPECT_DOUBLE_EQ(cy.grad()[1], 0.0);  // y clamped below
  EXPECT_NE(cy.grad()[0], 0.0);
  EXPECT_NE(cx.grad()[1], 0.0);
  // The image still receives gradient at the clamped locations.
  double gsum = 0.0;
  for (double v : img.grad()) gsum += v;
  EXPECT_NEAR(gsum, 2.0, 1e-12);  // interpolation weights sum to 1 per sample
}

TEST(BilinearSample, RejectsMismatchedShapes) {
  Tensor img(Shape{1, 1, 2, 2}, 1.0);
  Tensor cx(Shape{1, 2, 2}, 0.0);
  Tensor cy(Shape{1, 2, 3}, 0.0);
  EXPECT_THROW(bilinear_sample(img, cx, cy), DimensionError);
  Tensor cx2(Shape{2, 2, 2}, 0.0);
  EXPECT_THROW(bilinear_sample(img, cx2, cx2), DimensionError);
}

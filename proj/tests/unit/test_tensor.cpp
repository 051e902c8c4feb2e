#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "dinorade/errors.hpp"
#include "dinorade/nn.hpp"
#include "grad_check.hpp"

using namespace dinorade;
using ag::Tensor;
using testing::grad_check;
using testing::random_values;

TEST_SUITE("tensor") {
  TEST_CASE("elementwise ops match finite differences") {
    std::mt19937_64 rng(1);
    const ag::Shape s{3, 4, 2};
    const auto x = random_values(rng, 24);
    const Tensor other = Tensor::from(s, random_values(rng, 24));
    CHECK(grad_check([&](const Tensor& t) { return ag::mul(t, other); }, s, x, rng) < 1e-8);
    CHECK(grad_check([&](const Tensor& t) { return ag::sub(other, t); }, s, x, rng) < 1e-8);
    CHECK(grad_check([](const Tensor& t) { return ag::sigmoid(t); }, s, x, rng) < 1e-8);
    CHECK(grad_check([](const Tensor& t) { return ag::tanh(t); }, s, x, rng) < 1e-8);
    CHECK(grad_check([](const Tensor& t) { return ag::softmax_last(t); }, s, x, rng) < 1e-8);
    CHECK(grad_check([](const Tensor& t) { return ag::standardize(t); }, s, x, rng) < 1e-7);
    CHECK(grad_check([](const Tensor& t) { return ag::swap_last_two(t); }, s, x, rng) < 1e-8);
    CHECK(grad_check([](const Tensor& t) { return ag::mean_last(t); }, s, x, rng) < 1e-8);
    const auto pos = random_values(rng, 24, 0.1, 2.0);
    CHECK(grad_check([](const Tensor& t) { return ag::log1p(t); }, s, pos, rng) < 1e-8);
  }

  TEST_CASE("layer ops match finite differences") {
    std::mt19937_64 rng(2);
    const ag::Shape s{4, 6, 3};
    const auto x = random_values(rng, 72);
    const Tensor w3 = Tensor::from({3, 3, 3, 2}, random_values(rng, 54));
    const Tensor b = Tensor::from({2}, random_values(rng, 2));
    CHECK(grad_check([&](const Tensor& t) { return ag::conv2d(t, w3, &b, 1, 1); }, s, x, rng) < 1e-8);
    CHECK(grad_check([&](const Tensor& t) { return ag::conv2d(t, w3, &b, 2, 1); }, s, x, rng) < 1e-8);
    const Tensor wl = Tensor::from({3, 5}, random_values(rng, 15));
    CHECK(grad_check([&](const Tensor& t) { return ag::linear(t, wl, nullptr); }, s, x, rng) < 1e-8);
    CHECK(grad_check([](const Tensor& t) { return ag::avg_pool2d(t, 2, 3); }, s, x, rng) < 1e-8);
    CHECK(grad_check([](const Tensor& t) { return ag::upsample_bilinear2x(t); }, s, x, rng) < 1e-8);
    CHECK(grad_check([&](const Tensor& t) { return ag::concat_last(t, t); }, s, x, rng) < 1e-8);

    // Gradient w.r.t. the conv weight itself.
    const Tensor xin = Tensor::from(s, x);
    CHECK(grad_check([&](const Tensor& w) { return ag::conv2d(xin, w, nullptr, 1, 1); }, {3, 3, 3, 2},
                     std::vector<double>(w3.data().begin(), w3.data().end()), rng) < 1e-8);
  }

  TEST_CASE("conv2d equals a direct loop") {
    std::mt19937_64 rng(3);
    const int h = 5, w = 4, ci = 2, co = 3;
    const auto xv = random_values(rng, h * w * ci);
    const auto wv = random_values(rng, 9 * ci * co);
    const Tensor y = ag::conv2d(Tensor::from({h, w, ci}, xv), Tensor::from({3, 3, ci, co}, wv), nullptr, 1, 1);
    REQUIRE(y.shape() == ag::Shape{h, w, co});
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        for (int o = 0; o < co; ++o) {
          double acc = 0.0;
          for (int ki = 0; ki < 3; ++ki)
            for (int kj = 0; kj < 3; ++kj) {
              const int yi = i + ki - 1, xj = j + kj - 1;
              if (yi < 0 || yi >= h || xj < 0 || xj >= w) continue;
              for (int c = 0; c < ci; ++c)
                acc += xv[(yi * w + xj) * ci + c] * wv[((ki * 3 + kj) * ci + c) * co + o];
            }
          CHECK(y[(i * w + j) * co + o] == doctest::Approx(acc).epsilon(1e-12));
        }
  }

  TEST_CASE("gradients accumulate over shared inputs") {
    const Tensor x = Tensor::leaf({2}, {1.0, 2.0});
    ag::backward(ag::sum(ag::add(ag::mul(x, x), x)));
    const auto g = x.grad();
    CHECK(g[0] == doctest::Approx(3.0));
    CHECK(g[1] == doctest::Approx(5.0));
  }

  TEST_CASE("no-grad guard records nothing") {
    const Tensor x = Tensor::leaf({2}, {1.0, 2.0});
    Tensor y;
    {
      ag::NoGradGuard ng;
      y = ag::mul(x, x);
    }
    CHECK_FALSE(y.requires_grad());
    CHECK(ag::grad_enabled());
  }

  TEST_CASE("softmax rows sum to one") {
    std::mt19937_64 rng(4);
    const Tensor s = ag::softmax_last(Tensor::from({5, 7}, random_values(rng, 35, -20, 20)));
    for (int r = 0; r < 5; ++r) {
      double t = 0.0;
      for (int k = 0; k < 7; ++k) t += s[r * 7 + k];
      CHECK(t == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  TEST_CASE("clamp passes gradient only inside the interval") {
    const Tensor x = Tensor::leaf({3}, {-2.0, 0.5, 2.0});
    ag::backward(ag::sum(ag::clamp(x, -1.0, 1.0)));
    const auto g = x.grad();
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 1.0);
    CHECK(g[2] == 0.0);
  }
}

TEST_SUITE("nn") {
  TEST_CASE("checkpoint round trip and shape mismatch") {
    std::mt19937_64 rng(5);
    nn::ParameterStore a;
    nn::Linear::create(a, rng, "l", 3, 4);
    nn::Conv2d::create(a, rng, "c", 2, 2, 3);
    const auto path = std::filesystem::temp_directory_path() / "dinorade_test_ckpt.ckpt";
    a.save(path);

    nn::ParameterStore b;
    std::mt19937_64 rng2(99);
    nn::Linear::create(b, rng2, "l", 3, 4);
    nn::Conv2d::create(b, rng2, "c", 2, 2, 3);
    b.load(path);
    for (std::size_t i = 0; i < a.entries().size(); ++i) {
      const auto& ta = a.entries()[i].second;
      const auto& tb = b.entries()[i].second;
      for (std::size_t k = 0; k < ta.size(); ++k) CHECK(tb[k] == static_cast<double>(static_cast<float>(ta[k])));
    }

    nn::ParameterStore c;
    nn::Linear::create(c, rng2, "l", 3, 5);
    nn::Conv2d::create(c, rng2, "c", 2, 2, 3);
    CHECK_THROWS_AS(c.load(path), ConfigError);
    std::filesystem::remove(path);
  }

  TEST_CASE("cosine schedule endpoints") {
    CHECK(nn::cosine_lr(0, 100, 1e-3, 1e-4) == doctest::Approx(1e-3));
    CHECK(nn::cosine_lr(99, 100, 1e-3, 1e-4) == doctest::Approx(1e-4));
    CHECK(nn::cosine_lr(50, 101, 1e-3, 1e-4) == doctest::Approx(5.5e-4));
  }

  TEST_CASE("AdamW first step moves each weight by lr against the gradient sign") {
    nn::ParameterStore store;
    Tensor p = store.add("p", {2}, {1.0, -1.0});
    nn::AdamW opt(store, {0.9, 0.999, 1e-12, 0.0});
    ag::backward(ag::sum(ag::mul(p, Tensor::from({2}, {3.0, -0.5}))));
    opt.step(store, 0.1);
    CHECK(store.get("p")[0] == doctest::Approx(0.9));
    CHECK(store.get("p")[1] == doctest::Approx(-0.9));
  }
}

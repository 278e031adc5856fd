/* Copyright 2026 The HierDet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "hierdet/diffusion.hpp"
#include "hierdet/manipulate.hpp"
#include "hierdet/rng.hpp"

using namespace hierdet;

namespace {

struct Moments {
    double mean = 0.0;
    double var = 0.0;
};

template <typename F>
Moments sample_moments(int n, F draw)
{
    double s = 0.0;
    double s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = draw();
        s += v;
        s2 += v * v;
    }
    const double mean = s / n;
    return {mean, s2 / n - mean * mean};
}

}  // namespace

TEST_CASE("cosine schedule matches its closed form")
{
    const int T = 1000;
    const double s = 0.008;
    const Schedule sch = Schedule::cosine(T, s);
    REQUIRE(sch.timesteps() == T);
    CHECK(sch.alpha_bar(0) == 1.0);
    const auto f = [&](double t) {
        const double c = std::cos((t / T + s) / (1.0 + s) * std::numbers::pi / 2.0);
        return c * c;
    };
    for (int t = 1; t < T; t += 37) CHECK(sch.alpha_bar(t) == doctest::Approx(f(t) / f(0)).epsilon(1e-12));
    for (int t = 1; t <= T; ++t) {
        CHECK(sch.alpha_bar(t) <= sch.alpha_bar(t - 1));
        CHECK(sch.alpha_bar(t) > 0.0);
        // Per-step retention floor.
        CHECK(sch.alpha_bar(t) / sch.alpha_bar(t - 1) >= 1e-3 - 1e-15);
    }
    CHECK_THROWS(Schedule::from_alpha_bar({0.9, 0.5}));
    CHECK_THROWS(Schedule::from_alpha_bar({1.0, 0.5, 0.6}));
}

TEST_CASE("signal encoding")
{
    const BoxRow mid = signal_encode(Box{0.5, 0.5, 0.5, 0.5}, 2.0);
    for (const double v : mid) CHECK(v == 0.0);
    const BoxRow top = signal_encode(Box{1.0, 1.0, 1.0, 1.0}, 2.0);
    for (const double v : top) CHECK(v == 2.0);

    Rng rng(11);
    for (int i = 0; i < 10000; ++i) {
        const Box b{rng.uniform(), rng.uniform(), 1e-3 + (1.0 - 1e-3) * rng.uniform(), 1e-3 + (1.0 - 1e-3) * rng.uniform()};
        const Box r = signal_decode(signal_encode(b, 2.0), 2.0);
        CHECK(r.cx == doctest::Approx(b.cx).epsilon(1e-14).scale(1.0));
        CHECK(r.cy == doctest::Approx(b.cy).epsilon(1e-14).scale(1.0));
        CHECK(r.w == doctest::Approx(b.w).epsilon(1e-14).scale(1.0));
        CHECK(r.h == doctest::Approx(b.h).epsilon(1e-14).scale(1.0));
    }
    // Out-of-range signals are clamped into valid boxes.
    const Box c = signal_decode(BoxRow{-9.0, 9.0, -9.0, 9.0}, 2.0);
    CHECK(is_valid(c));
    CHECK(c.cx == 0.0);
    CHECK(c.w == 1e-4);
}

TEST_CASE("forward_noise without noise returns z0 exactly")
{
    const Schedule flat = Schedule::from_alpha_bar({1.0, 1.0, 1.0});
    Rng rng(1);
    const BoxArray z0{{0.1, -0.3, 1.7, -2.0}, {0.0, 0.5, 0.25, 1.0}};
    CHECK(forward_noise(z0, 1, flat, rng).z == z0);
    CHECK_THROWS_AS(forward_noise(z0, 0, flat, rng), std::out_of_range);
    CHECK_THROWS_AS(forward_noise(z0, 3, flat, rng), std::out_of_range);
}

TEST_CASE("forward_noise moments")
{
    const Schedule sch = Schedule::cosine(1000);
    const int n = 100000;
    const double z0v = 1.3;
    for (const int t : {100, 500, 900}) {
        Rng rng(derive_seed(21, static_cast<std::uint64_t>(t)));
        const BoxArray z0{{z0v, z0v, z0v, z0v}};
        const Moments m = sample_moments(n, [&] { return forward_noise(z0, t, sch, rng).z[0][0]; });
        const double ab = sch.alpha_bar(t);
        const double sigma = std::sqrt(1.0 - ab);
        CHECK(std::abs(m.mean - std::sqrt(ab) * z0v) <= 3.0 * sigma / std::sqrt(double(n)));
        CHECK(std::abs(m.var - (1.0 - ab)) <= 0.02 * (1.0 - ab));
    }
}

TEST_CASE("pad_gt_boxes")
{
    Rng rng(3);
    const std::vector<Box> gt{{0.2, 0.3, 0.1, 0.2}, {0.7, 0.6, 0.3, 0.1}, {0.5, 0.5, 0.4, 0.4}};

    SUBCASE("exactly N ground truths give a permutation")
    {
        const PaddedBoxes p = pad_gt_boxes(gt, 3, 2.0, rng);
        std::multiset<BoxRow> want;
        for (const Box& b : gt) want.insert(signal_encode(b, 2.0));
        CHECK(std::multiset<BoxRow>(p.z0.begin(), p.z0.end()) == want);
        CHECK_FALSE(p.truncated);
    }
    SUBCASE("empty ground truth gives N valid filler boxes")
    {
        const PaddedBoxes p = pad_gt_boxes({}, 8, 2.0, rng);
        REQUIRE(p.z0.size() == 8);
        for (const BoxRow& r : p.z0) CHECK(is_valid(signal_decode(r, 2.0)));
        for (const int s : p.source) CHECK(s == -1);
    }
    SUBCASE("three ground truths among eight rows")
    {
        const PaddedBoxes p = pad_gt_boxes(gt, 8, 2.0, rng);
        REQUIRE(p.z0.size() == 8);
        int real = 0;
        for (std::size_t i = 0; i < 8; ++i) {
            if (p.source[i] < 0) continue;
            ++real;
            CHECK(p.z0[i] == signal_encode(gt[static_cast<std::size_t>(p.source[i])], 2.0));
        }
        CHECK(real == 3);
    }
    SUBCASE("more ground truths than rows keeps a distinct subset")
    {
        const PaddedBoxes p = pad_gt_boxes(gt, 2, 2.0, rng);
        CHECK(p.truncated);
        CHECK(p.source[0] != p.source[1]);
        CHECK(p.source[0] >= 0);
        CHECK(p.source[1] >= 0);
    }
}

TEST_CASE("ddim_step to t = 0 with eta 0 returns the prediction exactly")
{
    const Schedule sch = Schedule::cosine(1000);
    Rng rng(5);
    const NoisyBoxes cur{{{0.3, -1.2, 0.8, 2.5}, {1.0, 1.0, -1.0, 0.0}}, 700};
    const BoxArray pred{{0.1, 0.2, -0.3, 0.4}, {-2.0, 2.0, 0.5, -0.5}};
    const NoisyBoxes a = ddim_step(cur, pred, 0, sch, 0.0, rng);
    CHECK(a.z == pred);
    CHECK(a.t == 0);

    Rng r1(9);
    Rng r2(9);
    CHECK(ddim_step(cur, pred, 300, sch, 0.0, r1).z == ddim_step(cur, pred, 300, sch, 0.0, r2).z);
    CHECK_THROWS(ddim_step(cur, pred, 700, sch, 0.0, rng));
    CHECK_THROWS(ddim_step(cur, pred, 100, sch, 1.5, rng));
}

TEST_CASE("oracle chain with eta 0 recovers z0")
{
    const Schedule sch = Schedule::cosine(1000);
    Rng rng(6);
    const BoxArray z0{{0.4, -0.7, 1.1, -1.9}, {0.0, 0.25, -0.5, 1.5}};
    NoisyBoxes z{inference_proposals(2, rng), 1000};
    for (const int t_next : {900, 750, 500, 250, 100, 10, 0}) z = ddim_step(z, z0, t_next, sch, 0.0, rng);
    for (std::size_t i = 0; i < z0.size(); ++i) {
        for (int k = 0; k < 4; ++k) CHECK(std::abs(z.z[i][k] - z0[i][k]) < 1e-9);
    }
}

TEST_CASE("noising then an oracle ddim step matches q(z_next | z0)")
{
    const Schedule sch = Schedule::cosine(1000);
    const double z0v = -0.8;
    const BoxArray z0{{z0v, z0v, z0v, z0v}};
    const int n = 100000;
    for (const double eta : {0.0, 0.5, 1.0}) {
        Rng rng(derive_seed(31, static_cast<std::uint64_t>(eta * 10)));
        const int t = 800;
        const int t_next = 300;
        const Moments m = sample_moments(n, [&] {
            const NoisyBoxes zt = forward_noise(z0, t, sch, rng);
            return ddim_step(zt, z0, t_next, sch, eta, rng).z[0][1];
        });
        const double ab = sch.alpha_bar(t_next);
        CHECK(std::abs(m.mean - std::sqrt(ab) * z0v) <= 3.0 * std::sqrt(1.0 - ab) / std::sqrt(double(n)));
        CHECK(std::abs(m.var - (1.0 - ab)) <= 0.02 * (1.0 - ab));
    }
}

TEST_CASE("box renewal")
{
    Rng rng(8);
    const NoisyBoxes cur{{{0.1, 0.2, 0.3, 0.4}, {0.5, 0.6, 0.7, 0.8}, {0.9, 1.0, 1.1, 1.2}, {1.3, 1.4, 1.5, 1.6}}, 500};
    std::vector<Detection> dets(4);

    for (Detection& d : dets) d.score = 0.9;
    CHECK(box_renewal(dets, cur, 0.5, rng).z == cur.z);

    for (Detection& d : dets) d.score = 0.1;
    const NoisyBoxes all = box_renewal(dets, cur, 0.5, rng);
    for (std::size_t i = 0; i < 4; ++i) {
        for (int k = 0; k < 4; ++k) CHECK(all.z[i][k] != cur.z[i][k]);
    }

    const double scores[] = {0.7, 0.2, 0.5, 0.49};
    for (std::size_t i = 0; i < 4; ++i) dets[i].score = scores[i];
    const NoisyBoxes mixed = box_renewal(dets, cur, 0.5, rng);
    std::set<std::size_t> kept;
    for (std::size_t i = 0; i < 4; ++i) {
        if (mixed.z[i] == cur.z[i]) kept.insert(i);
    }
    CHECK(kept == std::set<std::size_t>{0, 2});
}

TEST_CASE("inference proposals are standard normal and reproducible")
{
    Rng a(4);
    Rng b(4);
    CHECK(inference_proposals(16, a) == inference_proposals(16, b));
    Rng rng(12);
    const BoxArray rows = inference_proposals(25000, rng);
    double s = 0.0;
    double s2 = 0.0;
    for (const BoxRow& r : rows) {
        for (const double v : r) {
            s += v;
            s2 += v * v;
        }
    }
    const double n = 100000.0;
    CHECK(std::abs(s / n) < 3.0 / std::sqrt(n));
    CHECK(std::abs(s2 / n - 1.0) < 0.02);
}

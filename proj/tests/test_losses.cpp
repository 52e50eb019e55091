#include <doctest.h>

#include "epan/losses.hpp"
#include "support.hpp"

using namespace epan;
using testsupport::grad_check;
using testsupport::random_vector;

namespace {

// Explicit-loop evaluation of the weighted squared error family.
double weighted_sse_oracle(const std::vector<double>& pred, const std::vector<double>& target,
                           const std::vector<double>& mask, int channels, double lambda) {
    const std::size_t plane = mask.size();
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < plane; ++i) {
            const double d = pred[c * plane + i] - target[c * plane + i];
            acc += (lambda * mask[i] + 1.0) * d * d;
        }
    }
    return acc / static_cast<double>(pred.size());
}

} // namespace

TEST_CASE("mse_loss basics") {
    auto a = tensor_from<double>({1, 3, 2, 2}, random_vector(12, 1, 0.0, 1.0));
    CHECK(mse_loss(a, a)->item() == 0.0);

    auto zeros = tensor_zeros<double>({1, 1, 2, 2});
    auto halves = tensor_full<double>({1, 1, 2, 2}, 0.5);
    CHECK(mse_loss(halves, zeros)->item() == doctest::Approx(0.25).epsilon(1e-15));

    auto bv = random_vector(12, 2, 0.0, 1.0);
    auto b = tensor_from<double>({1, 3, 2, 2}, bv);
    double expected = 0.0;
    for (std::size_t i = 0; i < bv.size(); ++i) {
        const double d = a->data[i] - bv[i];
        expected += d * d;
    }
    expected /= 12.0;
    CHECK(mse_loss(a, b)->item() == doctest::Approx(expected).epsilon(1e-12));
    CHECK_THROWS_AS(mse_loss(a, tensor_zeros<double>({1, 3, 2, 3})), dimension_error);
}

TEST_CASE("edge_guided_loss follows Eq. 2 semantics") {
    auto pred = tensor_from<double>({1, 3, 4, 4}, random_vector(48, 3, 0.0, 1.0));
    auto target = tensor_from<double>({1, 3, 4, 4}, random_vector(48, 4, 0.0, 1.0));

    auto zero_mask = tensor_zeros<double>({1, 1, 4, 4});
    CHECK(edge_guided_loss(pred, target, zero_mask)->item() == 0.0);

    auto one_mask = tensor_full<double>({1, 1, 4, 4}, 1.0);
    CHECK(edge_guided_loss(pred, target, one_mask)->item() ==
          doctest::Approx(mse_loss(pred, target)->item()).epsilon(1e-14));

    // hand evaluation: diffs (0.1, 0.3), mask (1, 0) -> 0.01 / 2
    auto p2 = tensor_from<double>({1, 1, 2, 1}, {0.1, 0.3});
    auto t2 = tensor_zeros<double>({1, 1, 2, 1});
    auto m2 = tensor_from<double>({1, 1, 2, 1}, {1.0, 0.0});
    CHECK(edge_guided_loss(p2, t2, m2)->item() == doctest::Approx(0.005).epsilon(1e-15));

    auto bad_mask = tensor_from<double>({1, 1, 4, 4},
                                        random_vector(16, 5, 1.5, 2.0));
    CHECK_THROWS_AS(edge_guided_loss(pred, target, bad_mask), contract_error);
}

TEST_CASE("cdn_loss equals its two algebraic forms") {
    auto mask_vals = random_vector(16, 6, 0.0, 1.0);
    auto pred = tensor_from<double>({1, 3, 4, 4}, random_vector(48, 7, 0.0, 1.0));
    auto target = tensor_from<double>({1, 3, 4, 4}, random_vector(48, 8, 0.0, 1.0));
    auto mask = tensor_from<double>({1, 1, 4, 4}, mask_vals);

    SUBCASE("lambda 0 reduces to mse") {
        CHECK(cdn_loss(pred, target, mask, 0.0)->item() ==
              doctest::Approx(mse_loss(pred, target)->item()).epsilon(1e-14));
    }
    SUBCASE("unit mask with lambda 4 gives exactly 5x mse") {
        auto ones = tensor_full<double>({1, 1, 4, 4}, 1.0);
        CHECK(cdn_loss(pred, target, ones, 4.0)->item() ==
              doctest::Approx(5.0 * mse_loss(pred, target)->item()).epsilon(1e-13));
    }
    SUBCASE("dual forms and the explicit-loop oracle agree") {
        const double lambda = 4.0;
        const double direct = cdn_loss(pred, target, mask, lambda)->item();
        const double composed = lambda * edge_guided_loss(pred, target, mask)->item() +
                                mse_loss(pred, target)->item();
        CHECK(direct == doctest::Approx(composed).epsilon(1e-13));
        const double oracle = weighted_sse_oracle(pred->data, target->data, mask_vals, 3, lambda);
        CHECK(direct == doctest::Approx(oracle).epsilon(1e-13));
    }
    SUBCASE("strictly increasing in lambda for nonzero masked error") {
        const double l1 = cdn_loss(pred, target, mask, 1.0)->item();
        const double l2 = cdn_loss(pred, target, mask, 2.0)->item();
        const double l4 = cdn_loss(pred, target, mask, 4.0)->item();
        CHECK(l1 < l2);
        CHECK(l2 < l4);
    }
}

TEST_CASE("een_loss basics and hand evaluation") {
    auto m_s = tensor_from<double>({1, 1, 3, 3}, random_vector(9, 9, 0.0, 1.0));
    CHECK(een_loss(m_s, m_s, 4.0)->item() == 0.0);

    auto m_e = tensor_from<double>({1, 1, 3, 3}, random_vector(9, 10, 0.0, 1.0));
    CHECK(een_loss(m_e, m_s, 0.0)->item() ==
          doctest::Approx(mse_loss(m_e, m_s)->item()).epsilon(1e-14));

    // single pixel M_S = 1, M_E = 0, lambda 4 -> (4 + 1) * 1 = 5
    auto one = tensor_full<double>({1, 1, 1, 1}, 1.0);
    auto zero = tensor_zeros<double>({1, 1, 1, 1});
    CHECK(een_loss(zero, one, 4.0)->item() == doctest::Approx(5.0).epsilon(1e-15));

    SUBCASE("strictly increasing in lambda") {
        CHECK(een_loss(m_e, m_s, 1.0)->item() < een_loss(m_e, m_s, 3.0)->item());
    }
}

TEST_CASE("total_loss dispatches per variant") {
    auto pred = tensor_from<double>({1, 3, 4, 4}, random_vector(48, 11, 0.0, 1.0));
    auto target = tensor_from<double>({1, 3, 4, 4}, random_vector(48, 12, 0.0, 1.0));
    auto m_e = tensor_from<double>({1, 1, 4, 4}, random_vector(16, 13, 0.0, 1.0));
    auto m_s = tensor_from<double>({1, 1, 4, 4}, random_vector(16, 14, 0.0, 1.0));
    LossWeights w;

    CHECK(total_loss<double>(pred, target, nullptr, m_s, w, Variant::phi)->item() ==
          doctest::Approx(mse_loss(pred, target)->item()).epsilon(1e-14));

    CHECK(total_loss<double>(pred, target, nullptr, m_s, w, Variant::phi_eal)->item() ==
          doctest::Approx(cdn_loss(pred, target, m_s, w.lambda_c)->item()).epsilon(1e-14));

    for (Variant v : {Variant::phi_cat, Variant::phi_add, Variant::phi_att}) {
        CHECK(total_loss<double>(pred, target, m_e, m_s, w, v)->item() ==
              doctest::Approx(mse_loss(pred, target)->item() +
                              een_loss(m_e, m_s, w.lambda_e)->item()).epsilon(1e-13));
    }

    // epan: sum-of-parts oracle
    CHECK(total_loss<double>(pred, target, m_e, m_s, w, Variant::epan)->item() ==
          doctest::Approx(cdn_loss(pred, target, m_s, w.lambda_c)->item() +
                          een_loss(m_e, m_s, w.lambda_e)->item()).epsilon(1e-13));

    // perfect predictions -> 0
    CHECK(total_loss<double>(target, target, m_s, m_s, w, Variant::epan)->item() == 0.0);

    CHECK_THROWS_AS(total_loss<double>(pred, target, nullptr, m_s, w, Variant::epan),
                    contract_error);
    CHECK_THROWS_AS(total_loss<double>(pred, target, m_e, m_s, w, Variant::phi), contract_error);
}

TEST_CASE("losses are non-negative and vanish only on matching support") {
    auto pred = tensor_from<double>({1, 3, 3, 3}, random_vector(27, 15, 0.0, 1.0));
    auto target = tensor_from<double>({1, 3, 3, 3}, random_vector(27, 16, 0.0, 1.0));
    auto mask = tensor_from<double>({1, 1, 3, 3}, random_vector(9, 17, 0.0, 1.0));
    CHECK(mse_loss(pred, target)->item() >= 0.0);
    CHECK(edge_guided_loss(pred, target, mask)->item() >= 0.0);
    CHECK(cdn_loss(pred, target, mask, 4.0)->item() >= 0.0);
    CHECK(een_loss(mask, mask, 4.0)->item() == 0.0);
}

TEST_CASE("cdn gradient identity against the closed form and finite differences") {
    const int n = 48;
    auto pred = tensor_from<double>({1, 3, 4, 4}, random_vector(n, 18, 0.0, 1.0), true);
    auto target = tensor_from<double>({1, 3, 4, 4}, random_vector(n, 19, 0.0, 1.0));
    auto mask_vals = random_vector(16, 20, 0.0, 1.0);
    auto mask = tensor_from<double>({1, 1, 4, 4}, mask_vals);
    const double lambda = 4.0;

    backward(cdn_loss(pred, target, mask, lambda));
    for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < 16; ++i) {
            const std::size_t idx = static_cast<std::size_t>(c) * 16 + i;
            const double expected =
                (2.0 / n) * (lambda * mask_vals[i] + 1.0) * (pred->data[idx] - target->data[idx]);
            CHECK(pred->grad[idx] == doctest::Approx(expected).epsilon(1e-12));
        }
    }

    auto make_loss = [&] { return cdn_loss(pred, target, mask, lambda); };
    CHECK(grad_check(make_loss, {pred}).ok);
}

TEST_CASE("every loss gradient matches finite differences") {
    auto pred = tensor_from<double>({1, 3, 4, 4}, random_vector(48, 21, 0.0, 1.0), true);
    auto target = tensor_from<double>({1, 3, 4, 4}, random_vector(48, 22, 0.0, 1.0));
    auto m_e = tensor_from<double>({1, 1, 4, 4}, random_vector(16, 23, 0.1, 0.9), true);
    auto m_s = tensor_from<double>({1, 1, 4, 4}, random_vector(16, 24, 0.0, 1.0));
    LossWeights w;

    CHECK(grad_check([&] { return mse_loss(pred, target); }, {pred}).ok);
    CHECK(grad_check([&] { return edge_guided_loss(pred, target, m_s); }, {pred}).ok);
    CHECK(grad_check([&] { return cdn_loss(pred, target, m_s, 4.0); }, {pred}).ok);
    CHECK(grad_check([&] { return een_loss(m_e, m_s, 4.0); }, {m_e}).ok);
    CHECK(grad_check([&] { return total_loss<double>(pred, target, m_e, m_s, w, Variant::epan); },
                     {pred, m_e})
              .ok);
}

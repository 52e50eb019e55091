#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "epan/dataset.hpp"
#include "epan/metrics.hpp"
#include "support.hpp"

using namespace epan;

namespace {

// Greedy NMS rebuilt from scratch against the library result.
std::vector<BoundingBox> nms_oracle(std::vector<BoundingBox> boxes, double threshold) {
    std::vector<std::size_t> order(boxes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return boxes[a].score > boxes[b].score; });
    std::vector<BoundingBox> kept;
    for (std::size_t i : order) {
        bool ok = true;
        for (const auto& k : kept) {
            const int x0 = std::max(boxes[i].x, k.x), y0 = std::max(boxes[i].y, k.y);
            const int x1 = std::min(boxes[i].x + boxes[i].w, k.x + k.w);
            const int y1 = std::min(boxes[i].y + boxes[i].h, k.y + k.h);
            const double inter = std::max(0, x1 - x0) * static_cast<double>(std::max(0, y1 - y0));
            const double u = static_cast<double>(boxes[i].w) * boxes[i].h +
                             static_cast<double>(k.w) * k.h - inter;
            if (u > 0 && inter / u > threshold) {
                ok = false;
                break;
            }
        }
        if (ok) kept.push_back(boxes[i]);
    }
    return kept;
}

bool same_boxes(const std::vector<BoundingBox>& a, const std::vector<BoundingBox>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].x != b[i].x || a[i].y != b[i].y || a[i].w != b[i].w || a[i].h != b[i].h ||
            a[i].score != b[i].score) {
            return false;
        }
    }
    return true;
}

} // namespace

TEST_CASE("iou basics") {
    BoundingBox a{0, 0, 10, 10, 1.0};
    CHECK(iou(a, a) == doctest::Approx(1.0));
    BoundingBox b{10, 10, 10, 10, 1.0};
    CHECK(iou(a, b) == 0.0);
    BoundingBox c{5, 0, 10, 10, 1.0};
    CHECK(iou(a, c) == doctest::Approx(50.0 / 150.0));
}

TEST_CASE("nms keeps a single box and drops duplicates") {
    BoundingBox solo{3, 4, 10, 12, 0.7};
    auto kept = nms({solo}, 0.5);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].x == 3);

    BoundingBox strong{3, 4, 10, 12, 0.9};
    BoundingBox weak{3, 4, 10, 12, 0.8};
    kept = nms({weak, strong}, 0.5);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].score == 0.9);

    CHECK(nms({}, 0.5).empty());
    CHECK_THROWS_AS(nms({solo}, 0.0), parameter_error);
}

TEST_CASE("nms matches the brute-force greedy oracle on random boxes") {
    std::mt19937 rng(11);
    std::uniform_int_distribution<int> pos(0, 60), ext(5, 30);
    std::uniform_real_distribution<double> score(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<BoundingBox> boxes;
        for (int i = 0; i < 10; ++i) {
            boxes.push_back({pos(rng), pos(rng), ext(rng), ext(rng), score(rng)});
        }
        auto ours = nms(boxes, 0.5);
        auto expected = nms_oracle(boxes, 0.5);
        CHECK(same_boxes(ours, expected));
        for (std::size_t i = 0; i < ours.size(); ++i) {
            for (std::size_t j = i + 1; j < ours.size(); ++j) {
                CHECK(iou(ours[i], ours[j]) <= 0.5);
            }
        }
    }
}

TEST_CASE("importance ranking") {
    const int W = 100, H = 100;
    // perfectly centered, full-score, large box dominates
    BoundingBox centered{25, 25, 50, 50, 1.0};
    BoundingBox off{0, 0, 50, 50, 1.0};
    BoundingBox small{40, 40, 10, 10, 1.0};
    BoundingBox zero{25, 25, 50, 50, 0.0};
    const double imp_centered = box_importance(centered, W, H);
    CHECK(imp_centered > box_importance(off, W, H));
    CHECK(imp_centered > box_importance(small, W, H));
    CHECK(box_importance(zero, W, H) == 0.0);

    auto kept = importance_filter({centered, off, small, zero}, W, H, 1e-6);
    CHECK(kept.size() == 3); // zero-score box dropped for any positive threshold

    // hand-computed ordering on five constructed boxes
    std::vector<BoundingBox> boxes = {
        {25, 25, 50, 50, 1.0},  // centered large, imp = 1
        {25, 25, 50, 50, 0.5},  // same geometry, half score
        {35, 35, 30, 30, 1.0},  // centered smaller
        {0, 0, 50, 50, 1.0},    // corner large
        {45, 45, 10, 10, 0.2},  // centered tiny, weak
    };
    std::vector<double> imps;
    for (const auto& b : boxes) {
        imps.push_back(box_importance(b, W, H));
    }
    // expected order: 0 > 1 = (0.5 * imp0), 0 > 2 > 4; corner box 3 below 0
    CHECK(imps[0] == doctest::Approx(1.0));
    CHECK(imps[1] == doctest::Approx(0.5 * imps[0]));
    CHECK(imps[0] > imps[2]);
    CHECK(imps[2] > imps[4]);
    CHECK(imps[0] > imps[3]);
    // explicit formula evaluation for box 2: centrality 1, area (30*30)/1e4 = .09 -> .36
    CHECK(imps[2] == doctest::Approx(0.36));
}

TEST_CASE("make_linear_kernel shapes") {
    auto delta = make_linear_kernel(1.0, 0.7, 5);
    for (int y = 0; y < 5; ++y) {
        for (int x = 0; x < 5; ++x) {
            CHECK(delta.at(y, x) == doctest::Approx(y == 2 && x == 2 ? 1.0 : 0.0));
        }
    }

    auto horizontal = make_linear_kernel(5.0, 0.0, 5);
    for (int x = 0; x < 5; ++x) {
        CHECK(horizontal.at(2, x) == doctest::Approx(0.2).epsilon(1e-6));
    }
    double off_row = 0.0;
    for (int y = 0; y < 5; ++y) {
        if (y == 2) continue;
        for (int x = 0; x < 5; ++x) {
            off_row += horizontal.at(y, x);
        }
    }
    CHECK(off_row == 0.0);

    auto a = make_linear_kernel(5.0, 0.9, 7);
    auto b = make_linear_kernel(5.0, 0.9 + 3.14159265358979323846, 7);
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        CHECK(a.values[i] == doctest::Approx(b.values[i]).epsilon(1e-6));
    }

    CHECK_THROWS_AS(make_linear_kernel(3.0, 0.0, 4), parameter_error);
    CHECK_THROWS_AS(make_linear_kernel(9.0, 0.0, 5), parameter_error);

    // every kernel is normalized and non-negative
    for (double angle : {0.0, 0.3, 1.0, 2.2}) {
        auto k = make_linear_kernel(7.0, angle, 9);
        double sum = 0.0;
        for (float v : k.values) {
            CHECK(v >= 0.0f);
            sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("blur_with_kernel identities and oracle") {
    auto img = testsupport::make_test_pattern(12, 12, 3);
    auto delta = make_linear_kernel(1.0, 0.0, 3);
    auto same = blur_with_kernel(img, delta);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        CHECK(same.data[i] == doctest::Approx(img.data[i]).epsilon(1e-7));
    }

    Image flat(3, 8, 8);
    std::fill(flat.data.begin(), flat.data.end(), 0.37f);
    auto blurred_flat = blur_with_kernel(flat, make_linear_kernel(5.0, 0.4, 7));
    for (float v : blurred_flat.data) {
        CHECK(v == doctest::Approx(0.37).epsilon(1e-6));
    }

    // explicit-loop oracle with a horizontal 3-tap kernel and reflect borders
    auto kernel = make_linear_kernel(3.0, 0.0, 3);
    auto out = blur_with_kernel(img, kernel);
    for (int c = 0; c < img.channels; ++c) {
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                double acc = 0.0;
                for (int k = -1; k <= 1; ++k) {
                    int sx = x + k;
                    if (sx < 0) sx = -sx - 1;
                    if (sx >= img.width) sx = 2 * img.width - 1 - sx;
                    acc += kernel.at(1, k + 1) * img.at(c, y, sx);
                }
                CHECK(out.at(c, y, x) == doctest::Approx(acc).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("blur preserves range and (for symmetric-axis kernels) the mean") {
    auto img = testsupport::make_test_pattern(16, 16, 9);
    for (double angle : {0.0, 1.5707963267948966}) {
        auto out = blur_with_kernel(img, make_linear_kernel(5.0, angle, 7));
        double mean_in = 0.0, mean_out = 0.0;
        for (std::size_t i = 0; i < img.data.size(); ++i) {
            CHECK(out.data[i] >= 0.0f);
            CHECK(out.data[i] <= 1.0f);
            mean_in += img.data[i];
            mean_out += out.data[i];
        }
        mean_in /= img.data.size();
        mean_out /= img.data.size();
        CHECK(mean_out == doctest::Approx(mean_in).epsilon(1e-6));
    }
}

TEST_CASE("blur_by_averaging basics and edge spread") {
    auto img = testsupport::make_test_pattern(10, 10, 4);
    auto one = blur_by_averaging({img});
    CHECK(one.data == img.data);

    Image neg = img;
    for (std::size_t i = 0; i < neg.data.size(); ++i) {
        neg.data[i] = 1.0f - neg.data[i];
    }
    auto mean = blur_by_averaging({img, neg});
    for (float v : mean.data) {
        CHECK(v == doctest::Approx(0.5).epsilon(1e-6));
    }

    CHECK_THROWS_AS(blur_by_averaging({}), data_error);
    CHECK_THROWS_AS(blur_by_averaging({img, Image(3, 9, 10)}), dimension_error);

    // shifted copies of a sharp step: the transition width grows with count
    auto step_frame = [](int shift) {
        Image f(1, 8, 16);
        for (int y = 0; y < 8; ++y) {
            for (int x = 8 + shift; x < 16; ++x) {
                f.at(0, y, x) = 1.0f;
            }
        }
        return f;
    };
    auto measure_spread = [](const Image& f) {
        int spread = 0;
        for (int x = 0; x < 16; ++x) {
            const float v = f.at(0, 4, x);
            if (v > 0.01f && v < 0.99f) {
                ++spread;
            }
        }
        return spread;
    };
    auto few = blur_by_averaging({step_frame(0), step_frame(1)});
    auto many = blur_by_averaging(
        {step_frame(0), step_frame(1), step_frame(2), step_frame(3), step_frame(4)});
    CHECK(measure_spread(many) > measure_spread(few));
}

TEST_CASE("align_pair recovers a planted shift") {
    auto scene = testsupport::make_noise_image(64, 80, 21);
    BoundingBox box{30, 24, 20, 16, 1.0};
    auto sharp = crop_image(scene, box.x + 3, box.y - 2, box.w, box.h);
    auto result = align_pair(sharp, scene, box);
    CHECK(result.offset_x == 3);
    CHECK(result.offset_y == -2);
    CHECK(result.psnr == 99.0);
}

TEST_CASE("align_pair self-match and exhaustiveness") {
    auto scene = testsupport::make_noise_image(48, 48, 22);
    BoundingBox box{16, 16, 12, 12, 1.0};
    auto sharp = crop_image(scene, box.x, box.y, box.w, box.h);
    auto result = align_pair(sharp, scene, box);
    CHECK(result.offset_x == 0);
    CHECK(result.offset_y == 0);

    // full re-scan: the returned PSNR is the grid maximum
    const int ax0 = std::max(0, box.x - box.w / 2);
    const int ay0 = std::max(0, box.y - box.h / 2);
    const int ax1 = std::min(scene.width, box.x - box.w / 2 + 2 * box.w);
    const int ay1 = std::min(scene.height, box.y - box.h / 2 + 2 * box.h);
    for (int py = ay0; py + box.h <= ay1; ++py) {
        for (int px = ax0; px + box.w <= ax1; ++px) {
            auto window = crop_image(scene, px, py, box.w, box.h);
            CHECK(psnr(sharp, window, 1.0) <= result.psnr);
        }
    }
}

TEST_CASE("align_pair geometry error when the window cannot fit") {
    Image tiny(3, 8, 8);
    BoundingBox box{0, 0, 16, 16, 1.0};
    Image sharp(3, 16, 16);
    CHECK_THROWS_AS(align_pair(sharp, tiny, box), geometry_error);
    Image wrong(3, 4, 4);
    CHECK_THROWS_AS(align_pair(wrong, tiny, box), contract_error);
}

TEST_CASE("randomized planted shifts are recovered exactly") {
    std::mt19937 rng(31);
    std::uniform_int_distribution<int> shift(-6, 6);
    int exact = 0;
    const int trials = 50;
    for (int t = 0; t < trials; ++t) {
        auto scene = testsupport::make_noise_image(64, 64, 1000 + t);
        BoundingBox box{24, 24, 16, 16, 1.0};
        const int dx = shift(rng), dy = shift(rng);
        auto sharp = crop_image(scene, box.x + dx, box.y + dy, box.w, box.h);
        auto result = align_pair(sharp, scene, box);
        if (result.offset_x == dx && result.offset_y == dy) {
            ++exact;
        }
    }
    CHECK(exact == trials);
}

TEST_CASE("manifest round trip and scenario splits") {
    testsupport::TempDir tmp("epan-manifest");
    DatasetManifest manifest;
    for (int s = 0; s < 4; ++s) {
        for (int i = 0; i < 3; ++i) {
            ManifestRecord rec;
            rec.sharp_path = "sharp/s" + std::to_string(s) + "_" + std::to_string(i) + ".png";
            rec.blurry_path = "blurry/s" + std::to_string(s) + "_" + std::to_string(i) + ".png";
            rec.scenario = "scene" + std::to_string(s);
            rec.split = "train";
            manifest.records.push_back(rec);
        }
    }
    auto split = split_by_scenario(manifest, {"scene0", "scene1", "scene3"});
    verify_scenario_disjoint(split);
    int train = 0, test = 0;
    for (const auto& rec : split.records) {
        (rec.split == "train" ? train : test) += 1;
    }
    CHECK(train == 9);
    CHECK(test == 3);
    for (const auto& rec : split.records) {
        if (rec.scenario == "scene2") {
            CHECK(rec.split == "test");
        }
    }

    const auto path = tmp.str("manifest.jsonl");
    write_manifest(split, path);
    auto loaded = read_manifest(path);
    REQUIRE(loaded.records.size() == split.records.size());
    for (std::size_t i = 0; i < loaded.records.size(); ++i) {
        CHECK(loaded.records[i].sharp_path == split.records[i].sharp_path);
        CHECK(loaded.records[i].split == split.records[i].split);
        CHECK(loaded.records[i].scenario == split.records[i].scenario);
    }

    CHECK_THROWS_AS(split_by_scenario(manifest, {"nope"}), data_error);
    CHECK_THROWS_AS(split_by_scenario(manifest, {}), data_error);
    CHECK_THROWS_AS(split_by_scenario(manifest, {"scene0", "scene1", "scene2", "scene3"}),
                    data_error);

    DatasetManifest broken = manifest;
    broken.records[0].split = "test"; // scenario scene0 now on both sides
    CHECK_THROWS_AS(verify_scenario_disjoint(broken), data_error);
}

TEST_CASE("boxes sidecar round trip") {
    testsupport::TempDir tmp("epan-boxes");
    std::vector<BoxRecord> boxes = {
        {"img0", {1, 2, 30, 40, 0.9}},
        {"img1", {5, 6, 20, 10, 0.4}},
    };
    const auto path = tmp.str("boxes.jsonl");
    write_boxes(boxes, path);
    auto loaded = read_boxes(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].image == "img0");
    CHECK(loaded[1].box.score == doctest::Approx(0.4));
    CHECK_THROWS_AS(read_boxes(tmp.str("missing.jsonl")), io_error);
}

TEST_CASE("nms result is stable under the input-index tie-break") {
    std::vector<BoundingBox> boxes = {
        {0, 0, 10, 10, 0.5},
        {1, 1, 10, 10, 0.5},
        {40, 40, 10, 10, 0.5},
    };
    auto kept1 = nms(boxes, 0.5);
    auto kept2 = nms(boxes, 0.5);
    CHECK(same_boxes(kept1, kept2));
    REQUIRE(kept1.size() == 2);
    CHECK(kept1[0].x == 0); // earlier index wins the tie
}

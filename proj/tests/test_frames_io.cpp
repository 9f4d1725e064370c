/******************************************************************************
 * Copyright 2026 The PillarEdge Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 *****************************************************************************/

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "pillaredge/point_cloud.hpp"
#include "pillaredge/synth.hpp"

using namespace pillaredge;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    static int counter = 0;
    fs::path dir = fs::temp_directory_path() /
                   ("pillaredge_frames_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// Signed distance of a point from the box surface in the box frame:
// 0 means exactly on a face.
double surface_distance(const Box3D &b, const Point &p) {
    const double c = std::cos(b.theta), s = std::sin(b.theta);
    const double dx = p.x - b.cx, dy = p.y - b.cy, dz = p.z - b.cz;
    const double lx = c * dx + s * dy;
    const double ly = -s * dx + c * dy;
    const double excess =
        std::max({std::abs(lx) - 0.5 * b.dx, std::abs(ly) - 0.5 * b.dy, std::abs(dz) - 0.5 * b.dz});
    return excess;
}

bool cloud_equal(const PointCloud &a, const PointCloud &b) {
    if (a.points.size() != b.points.size()) return false;
    for (size_t i = 0; i < a.points.size(); ++i) {
        const Point &p = a.points[i], &q = b.points[i];
        if (p.x != q.x || p.y != q.y || p.z != q.z || p.r != q.r) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("read_frame parses a single packed record") {
    const fs::path dir = temp_dir();
    const fs::path f = dir / "000007.bin";
    const float rec[4] = {1.0f, 2.0f, 3.0f, 0.5f};
    std::ofstream(f, std::ios::binary).write(reinterpret_cast<const char *>(rec), 16);
    const PointCloud cloud = read_frame(f);
    CHECK(cloud.frame_id == 7);
    REQUIRE(cloud.points.size() == 1);
    CHECK(cloud.points[0].x == 1.0);
    CHECK(cloud.points[0].y == 2.0);
    CHECK(cloud.points[0].z == 3.0);
    CHECK(cloud.points[0].r == 0.5);
}

TEST_CASE("read_frame accepts an empty file") {
    const fs::path dir = temp_dir();
    const fs::path f = dir / "000000.bin";
    std::ofstream(f, std::ios::binary);
    CHECK(read_frame(f).points.empty());
}

TEST_CASE("read_frame error paths") {
    const fs::path dir = temp_dir();
    CHECK_THROWS_AS(read_frame(dir / "none.bin"), Error);

    const fs::path trunc = dir / "000001.bin";
    std::ofstream(trunc, std::ios::binary).write("12345678901", 11);
    CHECK_THROWS_WITH_AS(read_frame(trunc), doctest::Contains("multiple of 16"), Error);

    const fs::path nan_file = dir / "000002.bin";
    float bad[4] = {1.0f, std::numeric_limits<float>::quiet_NaN(), 0.0f, 0.0f};
    std::ofstream(nan_file, std::ios::binary).write(reinterpret_cast<const char *>(bad), 16);
    CHECK_THROWS_WITH_AS(read_frame(nan_file), doctest::Contains("non-finite"), Error);
}

TEST_CASE("frame codec round-trips bit-exactly on random frames") {
    const fs::path dir = temp_dir();
    Rng rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = rng.uniform_int(0, 200);
        std::vector<char> bytes(static_cast<size_t>(n) * 16);
        for (size_t i = 0; i < bytes.size(); i += 4) {
            const float v = static_cast<float>(rng.uniform(-80.0, 80.0));
            std::memcpy(bytes.data() + i, &v, 4);
        }
        const fs::path f = dir / "000099.bin";
        std::ofstream(f, std::ios::binary).write(bytes.data(), static_cast<long>(bytes.size()));
        const PointCloud cloud = read_frame(f);
        const fs::path g = dir / "000100.bin";
        write_frame(cloud, g);
        CHECK(slurp(f) == slurp(g));
    }
}

TEST_CASE("read_labels maps fields directly") {
    const fs::path dir = temp_dir();
    const fs::path f = dir / "000000.txt";
    std::ofstream(f) << "Car 10.0 0.0 -0.8 3.9 1.6 1.56 0.0\n";
    const auto labels = read_labels(f);
    REQUIRE(labels.size() == 1);
    CHECK(labels[0].class_name == "Car");
    CHECK(labels[0].box.cx == doctest::Approx(10.0));
    CHECK(labels[0].box.cy == doctest::Approx(0.0));
    CHECK(labels[0].box.cz == doctest::Approx(-0.8));
    CHECK(labels[0].box.dx == doctest::Approx(3.9));
    CHECK(labels[0].box.dy == doctest::Approx(1.6));
    CHECK(labels[0].box.dz == doctest::Approx(1.56));
    CHECK(labels[0].box.theta == doctest::Approx(0.0));
}

TEST_CASE("read_labels normalizes theta into (-pi, pi]") {
    const fs::path dir = temp_dir();
    const fs::path f = dir / "000000.txt";
    std::ofstream(f) << "Car 0 0 0 4 2 1.5 3.5\n";
    const auto labels = read_labels(f);
    REQUIRE(labels.size() == 1);
    CHECK(labels[0].box.theta == doctest::Approx(3.5 - 2.0 * kPi).epsilon(1e-9));
    CHECK(labels[0].box.theta == doctest::Approx(-2.7832).epsilon(1e-4));
}

TEST_CASE("read_labels skips comments and rejects malformed lines") {
    const fs::path dir = temp_dir();
    const fs::path only_comments = dir / "000001.txt";
    std::ofstream(only_comments) << "# header\n   # another comment\n\n";
    CHECK(read_labels(only_comments).empty());

    const fs::path bad_count = dir / "000002.txt";
    std::ofstream(bad_count) << "Car 1 2 3 4 5 6\n";
    CHECK_THROWS_WITH_AS(read_labels(bad_count), doctest::Contains("8 fields"), Error);

    const fs::path bad_num = dir / "000003.txt";
    std::ofstream(bad_num) << "Car 1 2 x 4 5 6 0\n";
    CHECK_THROWS_WITH_AS(read_labels(bad_num), doctest::Contains("non-numeric"), Error);

    const fs::path bad_size = dir / "000004.txt";
    std::ofstream(bad_size) << "Car 1 2 3 0 5 6 0\n";
    CHECK_THROWS_WITH_AS(read_labels(bad_size), doctest::Contains("non-positive"), Error);
}

TEST_CASE("label codec round-trips values exactly") {
    const fs::path dir = temp_dir();
    Rng rng(7);
    std::vector<GtObject> labels;
    for (int i = 0; i < 25; ++i) {
        GtObject g;
        g.box.cx = rng.uniform(-50, 50);
        g.box.cy = rng.uniform(-50, 50);
        g.box.cz = rng.uniform(-3, 1);
        g.box.dx = rng.uniform(0.5, 6);
        g.box.dy = rng.uniform(0.5, 3);
        g.box.dz = rng.uniform(0.5, 3);
        g.box.theta = normalize_angle(rng.uniform(-kPi, kPi));
        labels.push_back(g);
    }
    const fs::path f = dir / "000000.txt";
    write_labels(labels, f);
    const auto parsed = read_labels(f);
    REQUIRE(parsed.size() == labels.size());
    for (size_t i = 0; i < labels.size(); ++i) {
        CHECK(parsed[i].box.cx == labels[i].box.cx);
        CHECK(parsed[i].box.cy == labels[i].box.cy);
        CHECK(parsed[i].box.dz == labels[i].box.dz);
        CHECK(parsed[i].box.theta == labels[i].box.theta);
    }
    // A second write of the parsed labels is byte-identical.
    const fs::path g2 = dir / "000001.txt";
    write_labels(parsed, g2);
    CHECK(slurp(f) == slurp(g2));
}

TEST_CASE("gen_synthetic_scene degenerate params give an empty scene") {
    SynthParams p;
    p.n_cars = 0;
    p.ground_density = 0.0;
    const auto [cloud, labels] = gen_synthetic_scene(p);
    CHECK(cloud.points.empty());
    CHECK(labels.empty());
}

TEST_CASE("gen_synthetic_scene is deterministic under a fixed seed") {
    SynthParams p;
    p.n_cars = 4;
    p.seed = 99;
    p.noise_sigma = 0.02;
    const auto [c1, l1] = gen_synthetic_scene(p);
    const auto [c2, l2] = gen_synthetic_scene(p);
    CHECK(cloud_equal(c1, c2));
    REQUIRE(l1.size() == l2.size());
    for (size_t i = 0; i < l1.size(); ++i) {
        CHECK(l1[i].box.cx == l2[i].box.cx);
        CHECK(l1[i].box.theta == l2[i].box.theta);
    }
}

TEST_CASE("noise-free car points lie exactly on their box surface") {
    SynthParams p;
    p.n_cars = 3;
    p.ground_density = 0.0;
    p.surface_density = 40.0;
    p.noise_sigma = 0.0;
    p.seed = 3;
    const auto [cloud, labels] = gen_synthetic_scene(p);
    REQUIRE(labels.size() == 3);
    CHECK(cloud.points.size() > 100);
    for (const Point &pt : cloud.points) {
        double best = 1e30;
        for (const GtObject &g : labels) {
            best = std::min(best, std::abs(surface_distance(g.box, pt)));
        }
        CHECK(best <= 1e-6);
    }
}

TEST_CASE("car shells do not overlap in BEV") {
    SynthParams p;
    p.n_cars = 6;
    p.x_min = 2;
    p.x_max = 40;
    p.seed = 21;
    const auto [cloud, labels] = gen_synthetic_scene(p);
    (void)cloud;
    for (size_t i = 0; i < labels.size(); ++i) {
        for (size_t j = i + 1; j < labels.size(); ++j) {
            CHECK(bev_iou(labels[i].box, labels[j].box) == 0.0);
        }
    }
}

TEST_CASE("gen_synthetic_scene reports impossible placement") {
    SynthParams p;
    p.n_cars = 50;
    p.x_min = 0;
    p.x_max = 8;
    p.y_min = 0;
    p.y_max = 8;
    p.seed = 1;
    CHECK_THROWS_WITH_AS(gen_synthetic_scene(p), doctest::Contains("could not place"), Error);
}

TEST_CASE("flip_y mirrors points and labels") {
    PointCloud cloud;
    cloud.points.push_back({1.0, 2.0, 0.0, 0.5});
    std::vector<GtObject> labels(1);
    labels[0].box = {5.0, -1.0, 0.5, 4.0, 2.0, 1.5, kPi};
    const auto [fc, fl] = flip_y(cloud, labels);
    CHECK(fc.points[0].x == 1.0);
    CHECK(fc.points[0].y == -2.0);
    CHECK(fc.points[0].z == 0.0);
    CHECK(fc.points[0].r == 0.5);
    CHECK(fl[0].box.cy == 1.0);
    // theta = pi maps to -pi which normalizes back to pi
    CHECK(fl[0].box.theta == doctest::Approx(kPi));
    CHECK(fl[0].box.dx == 4.0);
    CHECK(fl[0].box.dy == 2.0);
}

TEST_CASE("flip_y is an involution on random scenes") {
    SynthParams p;
    p.n_cars = 4;
    p.seed = 12;
    p.noise_sigma = 0.05;
    const auto [cloud, labels] = gen_synthetic_scene(p);
    const auto [c1, l1] = flip_y(cloud, labels);
    const auto [c2, l2] = flip_y(c1, l1);
    CHECK(cloud_equal(cloud, c2));
    REQUIRE(labels.size() == l2.size());
    for (size_t i = 0; i < labels.size(); ++i) {
        CHECK(l2[i].box.cy == doctest::Approx(labels[i].box.cy).epsilon(1e-12));
        CHECK(l2[i].box.theta == doctest::Approx(labels[i].box.theta).epsilon(1e-12));
        CHECK(l2[i].box.dx == labels[i].box.dx);
    }
    CHECK(c1.points.size() == cloud.points.size());
    CHECK(l1.size() == labels.size());
}

TEST_CASE("rotate_z basics") {
    PointCloud cloud;
    cloud.points.push_back({1.0, 0.0, 0.0, 0.3});
    std::vector<GtObject> labels(1);
    labels[0].box = {2.0, 0.0, 0.0, 4.0, 2.0, 1.5, 0.2};

    const auto [ci, li] = rotate_z(cloud, labels, 0.0);
    CHECK(ci.points[0].x == 1.0);
    CHECK(li[0].box.theta == doctest::Approx(0.2));

    const auto [cq, lq] = rotate_z(cloud, labels, kPi / 2.0);
    CHECK(cq.points[0].x == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(cq.points[0].y == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(lq[0].box.theta == doctest::Approx(0.2 + kPi / 2.0));
}

TEST_CASE("rotate_z composes additively") {
    SynthParams p;
    p.n_cars = 3;
    p.seed = 8;
    const auto [cloud, labels] = gen_synthetic_scene(p);
    const double a = 0.7, b = -1.9;
    const auto [c1, l1] = rotate_z(cloud, labels, a);
    const auto [c12, l12] = rotate_z(c1, l1, b);
    const auto [c2, l2] = rotate_z(cloud, labels, a + b);
    REQUIRE(c12.points.size() == c2.points.size());
    for (size_t i = 0; i < c2.points.size(); ++i) {
        CHECK(c12.points[i].x == doctest::Approx(c2.points[i].x).epsilon(1e-5));
        CHECK(c12.points[i].y == doctest::Approx(c2.points[i].y).epsilon(1e-5));
    }
    for (size_t i = 0; i < l2.size(); ++i) {
        CHECK(l12[i].box.cx == doctest::Approx(l2[i].box.cx).epsilon(1e-5));
        CHECK(std::abs(std::remainder(l12[i].box.theta - l2[i].box.theta, 2.0 * kPi)) < 1e-5);
    }
}

#include <doctest.h>

#include <string>

#include "occbench/error.hpp"
#include "occbench/pgm.hpp"
#include "support.hpp"

using namespace occbench;
using namespace occbench::pgm;

TEST_CASE("PGM encode/decode round-trips") {
    GrayImage img{3, 2, {0, 10, 20, 30, 40, 255}};
    const auto bytes = encode(img);
    const std::string header(bytes.begin(), bytes.begin() + 11);
    CHECK(header == "P5\n3 2\n255\n");
    CHECK(decode(bytes) == img);

    const auto path = testing::scratch_dir("pgm") / "a.pgm";
    write(path, img);
    CHECK(read(path) == img);
}

TEST_CASE("PGM decode rejects malformed input") {
    const std::string bad = "P2\n1 1\n255\n0";
    CHECK_THROWS_AS(decode(std::vector<std::uint8_t>(bad.begin(), bad.end())), Error);
    const std::string short_payload = "P5\n2 2\n255\nab";
    CHECK_THROWS_AS(decode(std::vector<std::uint8_t>(short_payload.begin(), short_payload.end())), Error);
}

TEST_CASE("hstack lays images side by side") {
    const std::vector<GrayImage> parts = {{1, 2, {1, 2}}, {2, 2, {3, 4, 5, 6}}};
    const auto out = hstack(parts, 1, 9);
    CHECK(out.width == 4);
    CHECK(out.height == 2);
    CHECK(out.pixels == std::vector<std::uint8_t>{1, 9, 3, 4, 2, 9, 5, 6});
    const std::vector<GrayImage> uneven = {{1, 1, {0}}, {1, 2, {0, 0}}};
    CHECK_THROWS_AS(hstack(uneven), Error);
}

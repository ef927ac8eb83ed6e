#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <set>

#include "embchord/advertisement.hpp"

using namespace embchord;

namespace {

constexpr unsigned kBits = 16;

Advertisement sample_resource() {
    Advertisement a;
    a.kind = adv_kind::resource;
    a.subject_id = hash_to_id("temp-sensor", kBits);
    a.group_scope = GroupId{hash_to_id("net", kBits)};
    a.name = "temperature";
    a.attributes = {{"unit", "celsius"}, {"path", "/temp"}, {"rate", "1hz"}};
    a.endpoints = {{transport_kind::mem, "lan/n1"}};
    a.expiration_ms = 60000;
    return a;
}

Advertisement random_advertisement(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> kind_d(0, 3), count_d(0, 8), len_d(1, 24), ep_d(0, 3);
    Advertisement a;
    a.kind = static_cast<adv_kind>(kind_d(rng));
    a.subject_id = hash_to_id("subj" + std::to_string(rng()), kBits);
    a.group_scope = GroupId{hash_to_id("grp" + std::to_string(rng()), kBits)};
    a.version = static_cast<std::uint8_t>(rng());
    auto rand_string = [&](int len) {
        std::string s;
        std::uniform_int_distribution<int> ch(32, 126);
        for (int i = 0; i < len; ++i) s.push_back(static_cast<char>(ch(rng)));
        return s;
    };
    a.name = rand_string(len_d(rng));
    int attrs = count_d(rng);
    const auto& known = TagTable::entries();
    for (int i = 0; i < attrs; ++i) {
        std::string key = (rng() % 2) ? std::string(known[rng() % known.size()])
                                      : "x-" + rand_string(6);
        a.attributes[key] = rand_string(len_d(rng));
    }
    int eps = ep_d(rng);
    for (int i = 0; i < eps; ++i) {
        auto kind = static_cast<transport_kind>(rng() % 3);
        a.endpoints.push_back({kind, "seg" + std::to_string(rng() % 9) + "/p" + rand_string(3)});
    }
    a.expiration_ms = rng();
    return a;
}

} // namespace

TEST_CASE("tag table is bijective over its assigned code range") {
    const auto& entries = TagTable::entries();
    REQUIRE(entries.size() <= 0xFE);
    std::set<std::string_view> seen;
    for (std::size_t code = 0; code < entries.size(); ++code) {
        CHECK(seen.insert(entries[code]).second); // no duplicate names
        auto back = TagTable::code_for(entries[code]);
        REQUIRE(back.has_value());
        CHECK(*back == code);
    }
    CHECK_FALSE(TagTable::key_for(TagTable::escape_code).has_value());
}

TEST_CASE("minimal advertisement round-trips") {
    Advertisement a;
    a.kind = adv_kind::resource;
    a.subject_id = hash_to_id("r", kBits);
    a.group_scope = GroupId{hash_to_id("g", kBits)};
    a.name = "r";
    a.expiration_ms = 5;
    auto bytes = encode_advertisement(a);
    CHECK(decode_advertisement(bytes, kBits) == a);
}

TEST_CASE("advertisement round trip is the identity over random records") {
    std::mt19937_64 rng(2024);
    for (int i = 0; i < 500; ++i) {
        auto a = random_advertisement(rng);
        auto bytes = encode_advertisement(a);
        auto back = decode_advertisement(bytes, kBits);
        REQUIRE(back == a);
        // determinism: encoding twice gives identical bytes
        CHECK(encode_advertisement(a) == bytes);
    }
}

TEST_CASE("well-known keys encode smaller than the plain text rendering") {
    auto a = sample_resource();
    auto bytes = encode_advertisement(a);
    auto plain = render_plain(a);
    INFO("encoded " << bytes.size() << " vs plain " << plain.size());
    CHECK(bytes.size() < plain.size());

    std::mt19937_64 rng(99);
    const auto& known = TagTable::entries();
    for (int i = 0; i < 100; ++i) {
        Advertisement r = random_advertisement(rng);
        r.attributes.clear();
        for (int j = 0; j < 4; ++j)
            r.attributes[std::string(known[(i + j * 7) % known.size()])] = "v";
        auto enc = encode_advertisement(r);
        auto txt = render_plain(r);
        INFO("iteration " << i);
        CHECK(enc.size() < txt.size());
    }
}

TEST_CASE("unknown keys survive via the escape code") {
    auto a = sample_resource();
    a.attributes["x-vendor-weird"] = "?";
    auto bytes = encode_advertisement(a);
    CHECK(decode_advertisement(bytes, kBits) == a);
}

TEST_CASE("decode reports the offset of a truncation") {
    auto bytes = encode_advertisement(sample_resource());
    // cut mid-name: header is magic+version+kind (3) + two ids (3 each at m=16)
    byte_buffer cut(bytes.begin(), bytes.begin() + 11);
    try {
        decode_advertisement(cut, kBits);
        FAIL("expected malformed_error");
    } catch (const malformed_error& e) {
        CHECK(e.offset() <= cut.size());
    }
}

TEST_CASE("decode rejects corruption via the trailing CRC") {
    auto bytes = encode_advertisement(sample_resource());
    for (std::size_t at : {std::size_t(0), bytes.size() / 2, bytes.size() - 5}) {
        auto bad = bytes;
        bad[at] ^= 0x01;
        CHECK_THROWS_AS(decode_advertisement(bad, kBits), malformed_error);
    }
}

TEST_CASE("validation rejects out-of-contract records") {
    auto a = sample_resource();
    a.name.clear();
    CHECK_THROWS_AS(encode_advertisement(a), config_error);

    a = sample_resource();
    a.name.assign(256, 'x');
    CHECK_THROWS_AS(encode_advertisement(a), config_error);

    a = sample_resource();
    for (int i = 0; i < 65; ++i) a.attributes["k" + std::to_string(i)] = "v";
    CHECK_THROWS_AS(encode_advertisement(a), config_error);
}

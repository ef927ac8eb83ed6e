#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "embchord/envelope.hpp"

using namespace embchord;

namespace {
constexpr unsigned kBits = 16;

MessageEnvelope sample(std::size_t payload_len) {
    MessageEnvelope e;
    e.kind = payload_kind::pipe_data;
    e.flags = kFlagEncrypted;
    e.ttl = 9;
    e.src = PeerId{hash_to_id("a", kBits)};
    e.dst = hash_to_id("b", kBits);
    e.group = GroupId{hash_to_id("net", kBits)};
    e.correlation_id = 0x1122334455667788ULL;
    e.payload.resize(payload_len);
    for (std::size_t i = 0; i < payload_len; ++i)
        e.payload[i] = static_cast<std::uint8_t>(i * 31 + 7);
    return e;
}
} // namespace

TEST_CASE("envelope round trip is bit-exact, including a 64 KiB payload") {
    for (std::size_t len : {std::size_t(0), std::size_t(1), std::size_t(300), std::size_t(65536)}) {
        auto e = sample(len);
        auto bytes = encode_envelope(e);
        CHECK(decode_envelope(bytes, kBits) == e);
    }
}

TEST_CASE("empty-payload envelope matches the documented fixed size") {
    auto e = sample(0);
    auto bytes = encode_envelope(e);
    // magic+version+kind+flags+ttl (5), three ids (1+2 each at m=16),
    // correlation (8), payload length (4), CRC (4)
    CHECK(envelope_overhead(kBits) == 5 + 3 * 3 + 8 + 4 + 4);
    CHECK(bytes.size() == envelope_overhead(kBits));
    CHECK(encode_envelope(sample(300)).size() == envelope_overhead(kBits) + 300);
}

TEST_CASE("single corrupted byte fails the CRC") {
    auto bytes = encode_envelope(sample(40));
    std::mt19937 rng(5);
    for (int i = 0; i < 64; ++i) {
        auto bad = bytes;
        bad[rng() % bad.size()] ^= (1u << (rng() % 8));
        CHECK_THROWS_AS(decode_envelope(bad, kBits), malformed_error);
    }
}

TEST_CASE("bad magic and version are rejected with offsets") {
    auto bytes = encode_envelope(sample(4));
    auto rewrite = [&](std::size_t at, std::uint8_t value) {
        auto bad = byte_buffer(bytes.begin(), bytes.end() - 4);
        bad[at] = value;
        byte_writer w;
        w.bytes(bad);
        w.append_crc32();
        return w.take();
    };
    CHECK_THROWS_AS(decode_envelope(rewrite(0, 0x00), kBits), malformed_error);
    CHECK_THROWS_AS(decode_envelope(rewrite(1, 99), kBits), malformed_error);
}

TEST_CASE("flag accessors reflect the wire bits") {
    MessageEnvelope e;
    CHECK_FALSE(e.encrypted());
    CHECK_FALSE(e.propagate());
    e.flags = kFlagEncrypted | kFlagPropagate;
    CHECK(e.encrypted());
    CHECK(e.propagate());
}

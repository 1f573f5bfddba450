#pragma once

// 802.11b long-preamble PPDU framing for beacon MPDUs: MAC frame encoding,
// FCS and PLCP CRC, the self-synchronizing scrambler, and PLCP header
// serialization. Bit sequences are one value (0/1) per element, in transmit
// order; octets are sent LSB first.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wlanfp/error.hpp"

namespace wlanfp {

using Bits = std::vector<std::uint8_t>;

class MacAddress {
 public:
  constexpr MacAddress() = default;
  constexpr explicit MacAddress(std::array<std::uint8_t, 6> octets) : octets_(octets) {}

  /// Accepts "44-94-FC-65-F7-BA" or "44:94:fc:65:f7:ba".
  static MacAddress parse(std::string_view text) {
    std::array<std::uint8_t, 6> out{};
    if (text.size() != 17) throw ParseError("malformed MAC address '" + std::string(text) + "'");
    auto nibble = [&](char c) -> int {
      if (c >= '0' && c <= '9') return c - '0';
      if (c >= 'a' && c <= 'f') return c - 'a' + 10;
      if (c >= 'A' && c <= 'F') return c - 'A' + 10;
      throw ParseError("malformed MAC address '" + std::string(text) + "'");
    };
    for (std::size_t i = 0; i < 6; ++i) {
      if (i > 0 && text[3 * i - 1] != '-' && text[3 * i - 1] != ':')
        throw ParseError("malformed MAC address '" + std::string(text) + "'");
      out[i] = static_cast<std::uint8_t>(nibble(text[3 * i]) << 4 | nibble(text[3 * i + 1]));
    }
    return MacAddress(out);
  }

  std::string to_string() const {
    static constexpr char kHex[] = "0123456789ABCDEF";
    std::string s;
    s.reserve(17);
    for (std::size_t i = 0; i < 6; ++i) {
      if (i) s.push_back('-');
      s.push_back(kHex[octets_[i] >> 4]);
      s.push_back(kHex[octets_[i] & 0xF]);
    }
    return s;
  }

  constexpr const std::array<std::uint8_t, 6>& octets() const noexcept { return octets_; }
  friend constexpr auto operator<=>(const MacAddress&, const MacAddress&) = default;

 private:
  std::array<std::uint8_t, 6> octets_{};
};

struct BeaconPayload {
  std::string ssid;
  MacAddress mac;
  std::uint16_t beacon_interval = 100;
  // Octets occupied by vendor-specific padding elements (headers included).
  // Zero, or at least 2.
  std::size_t body_padding = 0;

  friend bool operator==(const BeaconPayload&, const BeaconPayload&) = default;
};

struct PlcpHeader {
  std::uint8_t signal = 0;
  std::uint8_t service = 0;
  std::uint16_t length_bits = 0;
  std::uint16_t crc = 0;
  bool crc_ok = false;
};

struct Ppdu {
  Bits preamble_bits;  // 128 SYNC ones + 16-bit SFD, unscrambled
  Bits header_bits;    // 48 bits, unscrambled
  Bits psdu_bits;

  std::size_t total_bits() const { return preamble_bits.size() + header_bits.size() + psdu_bits.size(); }

  /// Concatenated fields before scrambling.
  Bits plain_bits() const;
  /// The scrambled stream handed to the modulator.
  Bits air_bits() const;
};

namespace phy {

inline constexpr std::size_t kSyncBits = 128;
inline constexpr std::size_t kSfdBits = 16;
inline constexpr std::size_t kPreambleBits = kSyncBits + kSfdBits;  // 144
inline constexpr std::size_t kHeaderBits = 48;
inline constexpr std::size_t kPlcpBits = kPreambleBits + kHeaderBits;  // 192
inline constexpr std::uint16_t kSfd = 0xF3A0;
inline constexpr std::uint8_t kSignal1Mbps = 0x0A;
inline constexpr std::size_t kMaxSsidOctets = 32;
inline constexpr std::size_t kMaxPsduBits = 0xFFFF;

// Scrambler register: bit (k-1) holds the output delayed by k. The long
// preamble initial state "1101100" lists delays 1..7 left to right.
inline constexpr std::uint8_t kLongPreambleSeed = 0b0011011;

// MPDU layout: MAC header (24) + timestamp/interval/capability (12).
inline constexpr std::size_t kMacHeaderOctets = 24;
inline constexpr std::size_t kFixedFieldOctets = 12;
inline constexpr std::size_t kFcsOctets = 4;
inline constexpr std::uint8_t kElementSsid = 0;
inline constexpr std::uint8_t kElementVendor = 221;

// ---------------------------------------------------------------- bit helpers

inline void append_lsb_first(Bits& out, std::uint64_t value, std::size_t nbits) {
  for (std::size_t i = 0; i < nbits; ++i) out.push_back(static_cast<std::uint8_t>((value >> i) & 1U));
}

inline std::uint64_t read_lsb_first(std::span<const std::uint8_t> bits) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < bits.size(); ++i) v |= static_cast<std::uint64_t>(bits[i] & 1U) << i;
  return v;
}

inline Bits octets_to_bits(std::span<const std::uint8_t> octets) {
  Bits bits;
  bits.reserve(octets.size() * 8);
  for (auto o : octets) append_lsb_first(bits, o, 8);
  return bits;
}

inline std::vector<std::uint8_t> bits_to_octets(std::span<const std::uint8_t> bits) {
  if (bits.size() % 8 != 0) throw ParseError("bit sequence is not octet aligned");
  std::vector<std::uint8_t> out(bits.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<std::uint8_t>(read_lsb_first(bits.subspan(8 * i, 8)));
  return out;
}

// ---------------------------------------------------------------- checksums

/// IEEE 802.3 CRC-32 (reflected, init and xorout all ones).
inline std::uint32_t crc32(std::span<const std::uint8_t> octets) {
  std::uint32_t crc = 0xFFFFFFFFU;
  for (auto o : octets) {
    crc ^= o;
    for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xEDB88320U & (0U - (crc & 1U)));
  }
  return ~crc;
}

/// CCITT CRC-16 over bits in transmit order, register preset to ones,
/// result ones-complemented.
inline std::uint16_t plcp_crc16(std::span<const std::uint8_t> bits) {
  std::uint16_t reg = 0xFFFF;
  for (auto b : bits) {
    const unsigned fb = ((reg >> 15) & 1U) ^ (b & 1U);
    reg = static_cast<std::uint16_t>(reg << 1);
    if (fb) reg ^= 0x1021;
  }
  return static_cast<std::uint16_t>(~reg);
}

// ---------------------------------------------------------------- scrambler

/// Self-synchronizing scrambler with G(z) = z^-7 + z^-4 + 1.
inline Bits scramble(std::span<const std::uint8_t> bits, std::uint8_t seed) {
  Bits out(bits.size());
  unsigned state = seed & 0x7FU;
  for (std::size_t n = 0; n < bits.size(); ++n) {
    const unsigned y = (bits[n] & 1U) ^ ((state >> 3) & 1U) ^ ((state >> 6) & 1U);
    out[n] = static_cast<std::uint8_t>(y);
    state = ((state << 1) | y) & 0x7FU;
  }
  return out;
}

/// Inverse of scramble(). The register is fed with received bits, so after
/// seven bits the output is correct regardless of `seed`.
inline Bits descramble(std::span<const std::uint8_t> bits, std::uint8_t seed) {
  Bits out(bits.size());
  unsigned state = seed & 0x7FU;
  for (std::size_t n = 0; n < bits.size(); ++n) {
    const unsigned y = bits[n] & 1U;
    out[n] = static_cast<std::uint8_t>(y ^ ((state >> 3) & 1U) ^ ((state >> 6) & 1U));
    state = ((state << 1) | y) & 0x7FU;
  }
  return out;
}

/// The 128 SYNC bits as they appear on air (scrambled ones, long preamble).
inline Bits scrambled_sync_bits() {
  const Bits ones(kSyncBits, 1);
  return scramble(ones, kLongPreambleSeed);
}

// ---------------------------------------------------------------- MPDU

inline std::size_t mpdu_base_octets(std::size_t ssid_octets) {
  return kMacHeaderOctets + kFixedFieldOctets + 2 + ssid_octets + kFcsOctets;
}

/// Padding (in octets) that brings a beacon with `ssid_octets` of SSID to
/// exactly `target_bits`. Throws when the size is not reachable.
inline std::size_t padding_for_mpdu_bits(std::size_t ssid_octets, std::size_t target_bits) {
  if (target_bits % 8 != 0) throw EncodeError("MPDU size must be a whole number of octets");
  const std::size_t base = mpdu_base_octets(ssid_octets);
  const std::size_t target = target_bits / 8;
  if (target < base || target - base == 1)
    throw EncodeError("MPDU of " + std::to_string(target_bits) + " bits is not reachable with a " +
                      std::to_string(ssid_octets) + "-octet SSID");
  return target - base;
}

inline Bits encode_beacon_psdu(const BeaconPayload& p) {
  if (p.ssid.empty()) throw EncodeError("SSID must not be empty");
  if (p.ssid.size() > kMaxSsidOctets)
    throw EncodeError("SSID exceeds 32 octets (" + std::to_string(p.ssid.size()) + ")");
  if (p.body_padding == 1) throw EncodeError("padding of a single octet cannot hold an element");
  const std::size_t total = mpdu_base_octets(p.ssid.size()) + p.body_padding;
  if (total * 8 > kMaxPsduBits) throw EncodeError("MPDU does not fit the 16-bit LENGTH field");

  std::vector<std::uint8_t> f;
  f.reserve(total);
  f.push_back(0x80);  // management, subtype beacon
  f.push_back(0x00);
  f.push_back(0x00);  // duration
  f.push_back(0x00);
  for (int i = 0; i < 6; ++i) f.push_back(0xFF);  // DA broadcast
  for (auto o : p.mac.octets()) f.push_back(o);   // SA
  for (auto o : p.mac.octets()) f.push_back(o);   // BSSID
  f.push_back(0x00);                              // sequence control
  f.push_back(0x00);
  for (int i = 0; i < 8; ++i) f.push_back(0x00);  // timestamp
  f.push_back(static_cast<std::uint8_t>(p.beacon_interval & 0xFF));
  f.push_back(static_cast<std::uint8_t>(p.beacon_interval >> 8));
  f.push_back(0x01);  // capability: ESS
  f.push_back(0x00);
  f.push_back(kElementSsid);
  f.push_back(static_cast<std::uint8_t>(p.ssid.size()));
  f.insert(f.end(), p.ssid.begin(), p.ssid.end());

  std::size_t remaining = p.body_padding;
  std::uint8_t fill = 0;
  while (remaining > 0) {
    std::size_t chunk = std::min<std::size_t>(remaining, 257);
    if (remaining - chunk == 1) --chunk;
    f.push_back(kElementVendor);
    f.push_back(static_cast<std::uint8_t>(chunk - 2));
    for (std::size_t i = 2; i < chunk; ++i) f.push_back(fill++);
    remaining -= chunk;
  }

  const std::uint32_t fcs = crc32(f);
  for (int i = 0; i < 4; ++i) f.push_back(static_cast<std::uint8_t>(fcs >> (8 * i)));
  return octets_to_bits(f);
}

/// Parses a beacon MPDU. Misaligned or too-short input raises ParseError;
/// an FCS mismatch raises IntegrityError before any field is interpreted.
inline BeaconPayload decode_beacon_psdu(std::span<const std::uint8_t> bits) {
  if (bits.size() % 8 != 0) throw ParseError("MPDU is not octet aligned");
  const auto f = bits_to_octets(bits);
  if (f.size() < mpdu_base_octets(0)) throw ParseError("MPDU truncated (" + std::to_string(f.size()) + " octets)");

  const std::size_t body_end = f.size() - kFcsOctets;
  std::uint32_t fcs = 0;
  for (int i = 0; i < 4; ++i) fcs |= static_cast<std::uint32_t>(f[body_end + i]) << (8 * i);
  if (crc32(std::span(f).first(body_end)) != fcs) throw IntegrityError("MPDU FCS mismatch");

  if (f[0] != 0x80 || f[1] != 0x00) throw ParseError("not a beacon frame");

  BeaconPayload p;
  p.mac = MacAddress({f[10], f[11], f[12], f[13], f[14], f[15]});
  const std::size_t fixed = kMacHeaderOctets;
  p.beacon_interval = static_cast<std::uint16_t>(f[fixed + 8] | (f[fixed + 9] << 8));

  std::size_t pos = kMacHeaderOctets + kFixedFieldOctets;
  bool have_ssid = false;
  while (pos < body_end) {
    if (pos + 2 > body_end) throw ParseError("truncated information element");
    const std::uint8_t id = f[pos];
    const std::size_t len = f[pos + 1];
    if (pos + 2 + len > body_end) throw ParseError("information element overruns frame body");
    if (id == kElementSsid && !have_ssid) {
      if (len == 0 || len > kMaxSsidOctets) throw ParseError("invalid SSID length");
      p.ssid.assign(f.begin() + static_cast<std::ptrdiff_t>(pos + 2),
                    f.begin() + static_cast<std::ptrdiff_t>(pos + 2 + len));
      have_ssid = true;
    } else if (id == kElementVendor) {
      p.body_padding += 2 + len;
    }
    pos += 2 + len;
  }
  if (!have_ssid) throw ParseError("beacon carries no SSID element");
  return p;
}

// ---------------------------------------------------------------- PLCP

inline Bits build_plcp_header(std::uint16_t length_bits, std::uint8_t signal = kSignal1Mbps,
                              std::uint8_t service = 0) {
  Bits h;
  h.reserve(kHeaderBits);
  append_lsb_first(h, signal, 8);
  append_lsb_first(h, service, 8);
  append_lsb_first(h, length_bits, 16);
  const std::uint16_t crc = plcp_crc16(h);
  for (int i = 15; i >= 0; --i) h.push_back(static_cast<std::uint8_t>((crc >> i) & 1U));
  return h;
}

inline PlcpHeader parse_plcp(std::span<const std::uint8_t> header_bits) {
  if (header_bits.size() != kHeaderBits)
    throw ParseError("PLCP header must be 48 bits, got " + std::to_string(header_bits.size()));
  PlcpHeader h;
  h.signal = static_cast<std::uint8_t>(read_lsb_first(header_bits.subspan(0, 8)));
  h.service = static_cast<std::uint8_t>(read_lsb_first(header_bits.subspan(8, 8)));
  h.length_bits = static_cast<std::uint16_t>(read_lsb_first(header_bits.subspan(16, 16)));
  for (std::size_t i = 0; i < 16; ++i)
    h.crc = static_cast<std::uint16_t>(h.crc << 1 | (header_bits[32 + i] & 1U));
  h.crc_ok = plcp_crc16(header_bits.first(32)) == h.crc;
  return h;
}

inline Bits preamble_bits() {
  Bits p(kSyncBits, 1);
  append_lsb_first(p, kSfd, kSfdBits);
  return p;
}

inline Ppdu assemble_ppdu(std::span<const std::uint8_t> psdu_bits) {
  if (psdu_bits.size() > kMaxPsduBits)
    throw EncodeError("PSDU of " + std::to_string(psdu_bits.size()) + " bits exceeds the LENGTH field");
  Ppdu ppdu;
  ppdu.preamble_bits = preamble_bits();
  ppdu.header_bits = build_plcp_header(static_cast<std::uint16_t>(psdu_bits.size()));
  ppdu.psdu_bits.assign(psdu_bits.begin(), psdu_bits.end());
  return ppdu;
}

}  // namespace phy

inline Bits Ppdu::plain_bits() const {
  Bits all;
  all.reserve(total_bits());
  all.insert(all.end(), preamble_bits.begin(), preamble_bits.end());
  all.insert(all.end(), header_bits.begin(), header_bits.end());
  all.insert(all.end(), psdu_bits.begin(), psdu_bits.end());
  return all;
}

inline Bits Ppdu::air_bits() const { return phy::scramble(plain_bits(), phy::kLongPreambleSeed); }

}  // namespace wlanfp

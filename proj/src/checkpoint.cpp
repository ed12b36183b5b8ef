#include <cstring>
#include <fstream>

#include "rulelearn/trainer.hpp"

namespace rulelearn {

namespace {

constexpr char kMagic[8] = {'R', 'L', 'C', 'P', '0', '0', '0', '1'};

void put_u32(std::string& out, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t x) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double x) {
  std::uint64_t bits;
  std::memcpy(&bits, &x, 8);
  put_u64(out, bits);
}

void put_str(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    require(pos + n <= buf.size(), Errc::IoFailure, "checkpoint truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t x = 0;
    for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
    return x;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t x = 0;
    for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
    return x;
  }
  double f64() {
    std::uint64_t bits = u64();
    double x;
    std::memcpy(&x, &bits, 8);
    return x;
  }
  std::string str() {
    std::uint32_t n = u32();
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

std::string payload_bytes(const Checkpoint& ck) {
  std::string p;
  put_u32(p, static_cast<std::uint32_t>(ck.cfg.K));
  put_u32(p, static_cast<std::uint32_t>(ck.cfg.T));
  put_u32(p, static_cast<std::uint32_t>(ck.cfg.L));
  put_u32(p, static_cast<std::uint32_t>(ck.cfg.C));
  put_u32(p, static_cast<std::uint32_t>(ck.cfg.d));
  put_u32(p, static_cast<std::uint32_t>(ck.cfg.heads));
  put_f64(p, ck.cfg.temperature);
  put_u32(p, static_cast<std::uint32_t>(ck.precision));
  put_u32(p, static_cast<std::uint32_t>(ck.vocab.size()));
  for (const Predicate& pr : ck.vocab.entries) {
    put_str(p, pr.name);
    put_u32(p, static_cast<std::uint32_t>(pr.arity));
    put_u32(p, static_cast<std::uint32_t>((pr.is_inverse ? 1 : 0) | (pr.is_identity ? 2 : 0)));
    put_u32(p, static_cast<std::uint32_t>(pr.base_id + 1));
  }
  put_u32(p, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, t] : ck.tensors) {
    put_str(p, name);
    put_u32(p, static_cast<std::uint32_t>(t.rank()));
    for (int dim : t.shape) put_u32(p, static_cast<std::uint32_t>(dim));
    for (double x : t.v) put_f64(p, x);
  }
  return p;
}

}  // namespace

std::uint64_t config_digest(const RuleSpaceConfig& cfg, const PredicateTable& vocab) {
  std::string s;
  s += std::to_string(cfg.K) + "|" + std::to_string(cfg.T) + "|" + std::to_string(cfg.L) + "|" +
       std::to_string(cfg.C) + "|" + std::to_string(cfg.d) + "|" + std::to_string(cfg.heads) +
       "|" + std::to_string(cfg.temperature);
  for (const Predicate& p : vocab.entries)
    s += "|" + p.name + ":" + std::to_string(p.arity) + (p.is_inverse ? "i" : "") +
         (p.is_identity ? "e" : "");
  return fnv1a64(s);
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::string payload = payload_bytes(ck);
  std::string out(kMagic, sizeof(kMagic));
  put_u64(out, fnv1a64(payload.data(), payload.size()));
  put_u64(out, config_digest(ck.cfg, ck.vocab));
  out += payload;
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), Errc::IoFailure, "cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  require(f.good(), Errc::IoFailure, "short write to '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path, const RuleSpaceConfig* expected_cfg) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), Errc::IoFailure, "cannot open '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  require(buf.size() >= sizeof(kMagic) + 16 && std::memcmp(buf.data(), kMagic, sizeof(kMagic)) == 0,
          Errc::IoFailure, "not a checkpoint file: '" + path + "'");

  Reader r{buf, sizeof(kMagic)};
  std::uint64_t stored_payload_digest = r.u64();
  std::uint64_t stored_cfg_digest = r.u64();
  require(fnv1a64(buf.data() + r.pos, buf.size() - r.pos) == stored_payload_digest,
          Errc::DigestMismatch, "checkpoint payload digest mismatch (corrupt file)");

  Checkpoint ck;
  ck.cfg.K = static_cast<int>(r.u32());
  ck.cfg.T = static_cast<int>(r.u32());
  ck.cfg.L = static_cast<int>(r.u32());
  ck.cfg.C = static_cast<int>(r.u32());
  ck.cfg.d = static_cast<int>(r.u32());
  ck.cfg.heads = static_cast<int>(r.u32());
  ck.cfg.temperature = r.f64();
  ck.precision = static_cast<int>(r.u32());
  std::uint32_t preds = r.u32();
  for (std::uint32_t i = 0; i < preds; ++i) {
    Predicate p;
    p.name = r.str();
    p.arity = static_cast<int>(r.u32());
    std::uint32_t flags = r.u32();
    p.is_inverse = flags & 1;
    p.is_identity = flags & 2;
    p.base_id = static_cast<int>(r.u32()) - 1;
    ck.vocab.add(std::move(p));
  }
  require(config_digest(ck.cfg, ck.vocab) == stored_cfg_digest, Errc::DigestMismatch,
          "checkpoint config digest mismatch");
  if (expected_cfg)
    require(ck.cfg == *expected_cfg, Errc::DigestMismatch,
            "checkpoint was written with a different rule config");

  std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    std::uint32_t rank = r.u32();
    require(rank >= 1 && rank <= 3, Errc::IoFailure, "checkpoint tensor rank");
    std::vector<int> shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(static_cast<int>(r.u32()));
    Tensor64 t = Tensor64::zeros(shape);
    for (auto& x : t.v) x = r.f64();
    ck.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ck;
}

}  // namespace rulelearn

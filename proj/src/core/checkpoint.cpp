#include "prouter/core/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "prouter/numerics/rng.hpp"

namespace prouter {

namespace {

constexpr const char* kMagic = "PROUTER-CHECKPOINT";

void put_le(std::string& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
  return std::bit_cast<double>(bits);
}

bool single_line(const std::string& s) { return s.find('\n') == std::string::npos; }

}  // namespace

long long Checkpoint::dim(const std::string& key) const {
  for (const auto& [k, v] : dims) {
    if (k == key) return v;
  }
  throw CheckpointError("checkpoint has no dimension '" + key + "'");
}

std::string Checkpoint::meta_value(const std::string& key, const std::string& fallback) const {
  for (const auto& [k, v] : meta) {
    if (k == key) return v;
  }
  return fallback;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ostringstream header;
  header << kMagic << '\n';
  header << "format_version " << ckpt.format_version << '\n';
  header << "seed " << ckpt.seed << '\n';
  for (const auto& [k, v] : ckpt.dims) header << "dim " << k << ' ' << v << '\n';
  for (const auto& [k, v] : ckpt.meta) {
    if (!single_line(v) || k.find(' ') != std::string::npos) {
      throw CheckpointError("checkpoint metadata '" + k + "' must be a single line");
    }
    header << "meta " << k << ' ' << v << '\n';
  }
  std::size_t payload_doubles = 0;
  for (const auto& t : ckpt.tensors) {
    if (t.name.find(' ') != std::string::npos) {
      throw CheckpointError("tensor name '" + t.name + "' contains a space");
    }
    header << "tensor " << t.name << ' ' << t.value.rows() << ' ' << t.value.cols() << '\n';
    payload_doubles += t.value.size();
  }
  header << "payload " << payload_doubles * 8 << '\n';

  std::string payload;
  payload.reserve(payload_doubles * 8);
  for (const auto& t : ckpt.tensors) {
    for (double v : t.value.data()) put_le(payload, v);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  const std::string h = header.str();
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw CheckpointError("I/O failure writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMagic) {
    throw CheckpointError(path.string() + " is not a checkpoint file");
  }
  Checkpoint ckpt;
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> manifest;
  std::size_t payload_bytes = 0;
  bool have_payload = false;
  while (!have_payload && std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "format_version") {
      ls >> ckpt.format_version;
      if (ckpt.format_version != kCheckpointFormatVersion) {
        throw CheckpointError("checkpoint format_version " + std::to_string(ckpt.format_version) +
                              " does not match supported version " +
                              std::to_string(kCheckpointFormatVersion));
      }
    } else if (tag == "seed") {
      ls >> ckpt.seed;
    } else if (tag == "dim") {
      std::string k;
      long long v = 0;
      ls >> k >> v;
      ckpt.dims.emplace_back(k, v);
    } else if (tag == "meta") {
      std::string k;
      ls >> k;
      std::string rest;
      std::getline(ls, rest);
      if (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
      ckpt.meta.emplace_back(k, rest);
    } else if (tag == "tensor") {
      std::string name;
      std::size_t r = 0, c = 0;
      ls >> name >> r >> c;
      manifest.push_back({name, {r, c}});
    } else if (tag == "payload") {
      ls >> payload_bytes;
      have_payload = true;
    } else {
      throw CheckpointError("unexpected header line '" + line + "'");
    }
    if (ls.fail()) throw CheckpointError("malformed header line '" + line + "'");
  }
  if (!have_payload) throw CheckpointError("checkpoint header has no payload line");
  std::size_t expected = 0;
  for (const auto& m : manifest) expected += m.second.first * m.second.second * 8;
  if (expected != payload_bytes) {
    throw CheckpointError("payload size " + std::to_string(payload_bytes) +
                          " disagrees with tensor manifest (" + std::to_string(expected) + ")");
  }
  std::vector<unsigned char> bytes(payload_bytes);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(payload_bytes));
  if (static_cast<std::size_t>(in.gcount()) != payload_bytes) {
    throw CheckpointError("checkpoint payload truncated");
  }
  std::size_t off = 0;
  for (const auto& [name, shape] : manifest) {
    std::vector<double> v(shape.first * shape.second);
    for (double& x : v) {
      x = get_le(bytes.data() + off);
      off += 8;
    }
    ckpt.tensors.push_back({name, Tensor(shape.first, shape.second, std::move(v))});
  }
  return ckpt;
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(bytes);
  return os.str();
}

}  // namespace prouter

#include "liquiform/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "liquiform/error.hpp"
#include "liquiform/io.hpp"

namespace liquiform {

namespace {

template <typename U>
void put(std::string& out, U value) {
  static_assert(std::is_unsigned_v<U>);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}
  bool done() const { return pos_ == bytes_.size(); }

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    std::string_view s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string("checkpoint truncated while reading ") + what);
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const std::vector<CheckpointRecord>& records) {
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<std::uint16_t>(out, kCheckpointVersion);
  for (const auto& r : records) {
    if (static_cast<std::size_t>(element_count(r.shape)) != r.values.size()) {
      throw DimensionError("checkpoint record " + r.name + " has inconsistent size");
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(r.name.size()));
    out += r.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(r.shape.size()));
    for (Index d : r.shape) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    for (float v : r.values) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

std::vector<CheckpointRecord> decode_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  const std::string_view magic = in.take(sizeof(kCheckpointMagic), "magic");
  if (std::memcmp(magic.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw FormatError("not a checkpoint file (bad magic)");
  }
  const auto version = in.get<std::uint16_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  std::vector<CheckpointRecord> records;
  while (!in.done()) {
    CheckpointRecord r;
    const auto name_len = in.get<std::uint32_t>("name length");
    r.name = std::string(in.take(name_len, "name"));
    const auto rank = in.get<std::uint32_t>("rank");
    if (rank == 0 || rank > 8) throw FormatError("checkpoint record " + r.name + " has an unsupported rank");
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const auto d = in.get<std::uint64_t>("dims");
      if (d == 0 || d > (std::uint64_t{1} << 32)) throw FormatError("checkpoint record " + r.name + " has a bad extent");
      count *= d;
      if (count > (std::uint64_t{1} << 34)) throw FormatError("checkpoint record " + r.name + " is too large");
      r.shape.push_back(static_cast<Index>(d));
    }
    r.values.resize(static_cast<std::size_t>(count));
    const std::string_view raw = in.take(static_cast<std::size_t>(count) * 4, "values");
    for (std::size_t i = 0; i < r.values.size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[i * 4 + b])) << (8 * b);
      r.values[i] = std::bit_cast<float>(bits);
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<CheckpointRecord> checkpoint_records(const Network<float>& net) {
  std::vector<CheckpointRecord> records;
  const NetworkConfig& c = net.config();
  records.push_back({kMetaRecord,
                     {5},
                     {static_cast<float>(static_cast<int>(net.kind())), static_cast<float>(c.input_channels),
                      static_cast<float>(c.base_channels), static_cast<float>(c.height),
                      static_cast<float>(c.width)}});
  for (const auto& p : net.state()) {
    records.push_back({p.name, p.tensor.shape(), std::vector<float>(p.tensor.data().begin(), p.tensor.data().end())});
  }
  return records;
}

void save_checkpoint(const Network<float>& net, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(checkpoint_records(net)));
}

std::vector<CheckpointRecord> load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void load_into(Network<float>& net, const std::vector<CheckpointRecord>& records) {
  for (auto& p : net.state()) {
    const CheckpointRecord* match = nullptr;
    for (const auto& r : records) {
      if (r.name == p.name) {
        match = &r;
        break;
      }
    }
    if (!match) throw FormatError("checkpoint is missing " + p.name);
    if (match->shape != p.tensor.shape()) {
      throw FormatError("checkpoint record " + p.name + " has shape " + to_string(match->shape) + ", network expects " +
                        to_string(p.tensor.shape()));
    }
    std::copy(match->values.begin(), match->values.end(), p.tensor.mutable_data().begin());
  }
  for (const auto& r : records) {
    if (r.name == kMetaRecord) continue;
    bool known = false;
    for (const auto& p : net.state()) known = known || p.name == r.name;
    if (!known) throw FormatError("checkpoint record " + r.name + " does not belong to this network");
  }
}

std::unique_ptr<Network<float>> network_from_checkpoint(const std::vector<CheckpointRecord>& records,
                                                        std::optional<int> height, std::optional<int> width) {
  const CheckpointRecord* meta = nullptr;
  for (const auto& r : records) {
    if (r.name == kMetaRecord) meta = &r;
  }
  if (!meta || meta->values.size() != 5) throw FormatError("checkpoint has no network description");
  const int kind = static_cast<int>(meta->values[0]);
  if (kind < 0 || kind > 2) throw FormatError("checkpoint names an unknown network kind");
  NetworkConfig cfg;
  cfg.input_channels = static_cast<int>(meta->values[1]);
  cfg.base_channels = static_cast<int>(meta->values[2]);
  cfg.height = height.value_or(static_cast<int>(meta->values[3]));
  cfg.width = width.value_or(static_cast<int>(meta->values[4]));
  auto net = build_network<float>(static_cast<NetworkKind>(kind), cfg);
  load_into(*net, records);
  return net;
}

std::unique_ptr<Network<float>> load_network(const std::filesystem::path& path, std::optional<int> height,
                                             std::optional<int> width) {
  return network_from_checkpoint(load_checkpoint(path), height, width);
}

}  // namespace liquiform

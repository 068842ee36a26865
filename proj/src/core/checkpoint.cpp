#include "byolim/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

namespace byolim {

static_assert(std::endian::native == std::endian::little, "checkpoint codec assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'B', 'Y', 'I', 'M'};

template <class U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <class U>
  U get() {
    U v;
    std::memcpy(&v, take(sizeof(U)).data(), sizeof(U));
    return v;
  }

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw Error(ErrorCode::checkpoint_corrupt, "checkpoint truncated");
    std::string_view s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic, 4);
  put<std::uint16_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.size()));
  for (const auto& rec : ckpt) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(rec.name.size()));
    out += rec.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(rec.value.rank()));
    for (std::size_t d : rec.value.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    out.append(reinterpret_cast<const char*>(rec.value.raw()), rec.value.size() * sizeof(float));
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(4) != std::string_view(kMagic, 4)) throw Error(ErrorCode::checkpoint_corrupt, "bad checkpoint magic");
  const auto version = in.get<std::uint16_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::checkpoint_incompatible, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = in.get<std::uint32_t>();
  Checkpoint ckpt;
  for (std::uint32_t r = 0; r < count; ++r) {
    CheckpointRecord rec;
    rec.name = std::string(in.take(in.get<std::uint32_t>()));
    const auto rank = in.get<std::uint32_t>();
    if (rank > 8) throw Error(ErrorCode::checkpoint_corrupt, "record " + rec.name + " has rank " + std::to_string(rank));
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(in.get<std::uint32_t>());
      if (shape.back() == 0) throw Error(ErrorCode::checkpoint_corrupt, "record " + rec.name + " has a zero dimension");
    }
    const std::size_t n = shape_size(shape);
    const std::string_view raw = in.take(n * sizeof(float));
    std::vector<float> data(n);
    std::memcpy(data.data(), raw.data(), raw.size());
    rec.value = Tensor(std::move(shape), std::move(data));
    ckpt.push_back(std::move(rec));
  }
  if (!in.done()) throw Error(ErrorCode::checkpoint_corrupt, "trailing bytes after checkpoint records");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io_error, "failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

Checkpoint make_checkpoint(const std::vector<const Parameter<float>*>& params, std::string_view strip_prefix) {
  Checkpoint ckpt;
  for (const auto* p : params) {
    std::string name = p->name();
    if (!strip_prefix.empty() && name.starts_with(strip_prefix)) name.erase(0, strip_prefix.size());
    ckpt.push_back({std::move(name), p->value});
  }
  return ckpt;
}

std::size_t apply_checkpoint(const Checkpoint& ckpt, const std::vector<Parameter<float>*>& params,
                             bool allow_partial) {
  std::map<std::string, Parameter<float>*> by_name;
  for (auto* p : params) by_name[p->name()] = p;
  std::set<std::string> loaded;
  for (const auto& rec : ckpt) {
    auto it = by_name.find(rec.name);
    if (it == by_name.end()) {
      if (allow_partial) continue;
      throw Error(ErrorCode::checkpoint_incompatible, "record " + rec.name + " has no matching parameter");
    }
    if (it->second->value.shape() != rec.value.shape()) {
      throw Error(ErrorCode::checkpoint_incompatible, "record " + rec.name + " has shape " +
                                                          shape_string(rec.value.shape()) + ", model expects " +
                                                          shape_string(it->second->value.shape()));
    }
    loaded.insert(rec.name);
  }
  if (loaded.empty()) throw Error(ErrorCode::checkpoint_incompatible, "checkpoint shares no parameters with the model");
  if (!allow_partial) {
    for (const auto* p : params)
      if (!loaded.count(p->name())) throw Error(ErrorCode::checkpoint_incompatible, "checkpoint lacks " + p->name());
  }
  // Validation passed; copy only now so a failed load leaves the model intact.
  for (const auto& rec : ckpt) {
    auto it = by_name.find(rec.name);
    if (it != by_name.end()) it->second->value = rec.value;
  }
  return loaded.size();
}

ClassifierModel<float> classifier_from_checkpoint(const Checkpoint& ckpt, std::size_t input_size) {
  std::map<std::string, const Tensor*> rec;
  for (const auto& r : ckpt) rec[r.name] = &r.value;
  auto find = [&](const std::string& name) -> const Tensor* {
    auto it = rec.find(name);
    return it == rec.end() ? nullptr : it->second;
  };

  EncoderConfig enc;
  enc.block_channels.clear();
  for (std::size_t i = 0;; ++i) {
    const Tensor* w = find("encoder.block" + std::to_string(i) + ".conv.weight");
    if (!w) break;
    if (w->rank() != 4 || w->dim(2) != w->dim(3)) {
      throw Error(ErrorCode::checkpoint_incompatible, "record encoder.block" + std::to_string(i) +
                                                          ".conv.weight is not a square conv kernel");
    }
    if (i == 0) {
      enc.input_channels = w->dim(1);
      enc.kernel = w->dim(2);
    }
    enc.block_channels.push_back(w->dim(0));
  }
  if (enc.block_channels.empty()) throw Error(ErrorCode::checkpoint_incompatible, "checkpoint has no encoder blocks");
  enc.input_height = enc.input_width = std::max(input_size, std::size_t{1} << enc.block_channels.size());

  ClassifierConfig cls;
  cls.hidden_dims.clear();
  for (std::size_t i = 0;; ++i) {
    const Tensor* w = find("classifier.dense" + std::to_string(i) + ".weight");
    if (!w) break;
    if (w->rank() != 2) throw Error(ErrorCode::checkpoint_incompatible, "classifier.dense" + std::to_string(i) + ".weight must be rank 2");
    cls.hidden_dims.push_back(w->dim(1));
  }
  const Tensor* out = find("classifier.out.weight");
  if (!out || out->rank() != 2) throw Error(ErrorCode::checkpoint_incompatible, "checkpoint has no classifier.out.weight");
  cls.num_classes = out->dim(1);

  Rng rng(0);
  ClassifierModel<float> model = ClassifierModel<float>::build(enc, cls, rng);
  apply_checkpoint(ckpt, model.parameters(), false);
  return model;
}

}  // namespace byolim

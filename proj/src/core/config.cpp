#include "byolim/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "byolim/rng.hpp"

namespace byolim {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw Error(ErrorCode::config_invalid, "key '" + key + "': '" + value + "' is not " + expected);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class U>
U parse_number(const std::string& key, const std::string& v) {
  U out{};
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "a boolean");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(v)) out.push_back(parse_number<std::size_t>(key, item));
  return out;
}

std::string join_sizes(const std::vector<std::size_t>& items) {
  std::vector<std::string> s;
  for (auto i : items) s.push_back(std::to_string(i));
  return join(s);
}

struct Field {
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)> set;
};

template <class F>
Field make_size(F ref) {
  return {[ref](const ExperimentConfig& c) { return std::to_string(ref(c)); },
          [ref](ExperimentConfig& c, const std::string& k, const std::string& v) { ref(c) = parse_number<std::size_t>(k, v); }};
}

template <class F>
Field make_double(F ref) {
  return {[ref](const ExperimentConfig& c) { return format_double(ref(c)); },
          [ref](ExperimentConfig& c, const std::string& k, const std::string& v) { ref(c) = parse_number<double>(k, v); }};
}

template <class F>
Field make_bool(F ref) {
  return {[ref](const ExperimentConfig& c) { return std::string(ref(c) ? "true" : "false"); },
          [ref](ExperimentConfig& c, const std::string& k, const std::string& v) { ref(c) = parse_bool(k, v); }};
}

template <class F>
Field make_string(F ref) {
  return {[ref](const ExperimentConfig& c) { return std::string(ref(c)); },
          [ref](ExperimentConfig& c, const std::string&, const std::string& v) { ref(c) = v; }};
}

template <class F>
Field make_sizes(F ref) {
  return {[ref](const ExperimentConfig& c) { return join_sizes(ref(c)); },
          [ref](ExperimentConfig& c, const std::string& k, const std::string& v) { ref(c) = parse_sizes(k, v); }};
}

#define BYOLIM_REF(expr) [](auto& c) -> auto& { return c.expr; }

// Ordered key table; serialize() follows this order.
const std::vector<std::pair<std::string, Field>>& field_table() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"seed", Field{[](const ExperimentConfig& c) { return std::to_string(c.seed); },
                     [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                       c.seed = parse_number<std::uint64_t>(k, v);
                     }}},
      {"out", make_string(BYOLIM_REF(out))},
      {"data", make_string(BYOLIM_REF(data.source))},
      {"data.classes", make_size(BYOLIM_REF(data.classes))},
      {"data.per_class", make_size(BYOLIM_REF(data.per_class))},
      {"data.image_size", make_size(BYOLIM_REF(data.image_size))},
      {"encoder.input_size",
       Field{[](const ExperimentConfig& c) { return std::to_string(c.encoder.input_height); },
             [](ExperimentConfig& c, const std::string& k, const std::string& v) {
               c.encoder.input_height = c.encoder.input_width = parse_number<std::size_t>(k, v);
             }}},
      {"encoder.channels", make_sizes(BYOLIM_REF(encoder.block_channels))},
      {"encoder.kernel", make_size(BYOLIM_REF(encoder.kernel))},
      {"head.hidden_dim", make_size(BYOLIM_REF(head.hidden_dim))},
      {"classifier.num_classes", make_size(BYOLIM_REF(classifier.num_classes))},
      {"classifier.hidden_dims", make_sizes(BYOLIM_REF(classifier.hidden_dims))},
      {"byol.tau", make_double(BYOLIM_REF(byol.tau))},
      {"byol.symmetrize_loss", make_bool(BYOLIM_REF(byol.symmetrize_loss))},
      {"byol.use_target_network", make_bool(BYOLIM_REF(byol.use_target_network))},
      {"byol.use_momentum", make_bool(BYOLIM_REF(byol.use_momentum))},
      {"byol.use_predictor", make_bool(BYOLIM_REF(byol.use_predictor))},
      {"byol.projection_dim", make_size(BYOLIM_REF(byol.projection_dim))},
      {"byol.epochs", make_size(BYOLIM_REF(byol.epochs))},
      {"byol.batch_size", make_size(BYOLIM_REF(byol.batch_size))},
      {"byol.learning_rate", make_double(BYOLIM_REF(byol.learning_rate))},
      {"train.max_epochs", make_size(BYOLIM_REF(train.max_epochs))},
      {"train.batch_size", make_size(BYOLIM_REF(train.batch_size))},
      {"train.patience", make_size(BYOLIM_REF(train.early_stop_patience))},
      {"train.freeze_encoder", make_bool(BYOLIM_REF(train.freeze_encoder))},
      {"train.augment", make_bool(BYOLIM_REF(train.augment))},
      {"train.init_from", make_string(BYOLIM_REF(init_from))},
      {"adam.learning_rate", make_double(BYOLIM_REF(adam.learning_rate))},
      {"adam.beta1", make_double(BYOLIM_REF(adam.beta1))},
      {"adam.beta2", make_double(BYOLIM_REF(adam.beta2))},
      {"adam.epsilon", make_double(BYOLIM_REF(adam.epsilon))},
      {"augment.rotation", make_double(BYOLIM_REF(augment.rotation_max_deg))},
      {"augment.shift", make_double(BYOLIM_REF(augment.shift_frac))},
      {"augment.shear", make_double(BYOLIM_REF(augment.shear_range))},
      {"augment.zoom", make_double(BYOLIM_REF(augment.zoom_range))},
      {"augment.hflip", make_bool(BYOLIM_REF(augment.hflip))},
      {"augment.brightness", make_double(BYOLIM_REF(augment.brightness))},
      {"split.train", make_double(BYOLIM_REF(split.train))},
      {"split.val", make_double(BYOLIM_REF(split.val))},
      {"split.test", make_double(BYOLIM_REF(split.test))},
      {"split.stratified", make_bool(BYOLIM_REF(stratified))},
      {"eval.batch_size", make_size(BYOLIM_REF(eval.batch_size))},
      {"eval.warmup", make_size(BYOLIM_REF(eval.warmup))},
      {"eval.timed_batches", make_size(BYOLIM_REF(eval.timed_batches))},
      {"eval.subset", make_string(BYOLIM_REF(eval.subset))},
      {"eval.model", make_string(BYOLIM_REF(eval.model))},
      {"kfold.k", make_size(BYOLIM_REF(kfold.k))},
      {"kfold.pretrain_epochs", make_size(BYOLIM_REF(kfold.pretrain_epochs))},
      {"ablate.variants",
       Field{[](const ExperimentConfig& c) { return join(c.ablate_variants); },
             [](ExperimentConfig& c, const std::string&, const std::string& v) { c.ablate_variants = split_list(v); }}},
  };
  return table;
}

#undef BYOLIM_REF

const Field* find_field(const std::string& key) {
  for (const auto& [name, field] : field_table())
    if (name == key) return &field;
  return nullptr;
}

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "augment.preset") {
    if (v == "standard") augment = AugmentationSpec{};
    else if (v == "limited") augment = AugmentationSpec::limited();
    else if (v == "extended") augment = AugmentationSpec::extended();
    else if (v == "none") augment = AugmentationSpec::identity();
    else bad_value(key, v, "one of standard, limited, extended, none");
    return;
  }
  const Field* f = find_field(key);
  if (!f) throw Error(ErrorCode::config_invalid, "unknown config key '" + key + "'");
  f->set(*this, key, v);
}

std::string ExperimentConfig::get(const std::string& key) const {
  const Field* f = find_field(key);
  if (!f) throw Error(ErrorCode::config_invalid, "unknown config key '" + key + "'");
  return f->get(*this);
}

const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, field] : field_table()) out.push_back(name);
    return out;
  }();
  return names;
}

void ExperimentConfig::validate() const {
  encoder.validate();
  head.validate();
  classifier.validate();
  byol.validate();
  train.validate();
  adam.validate();
  augment.validate();
  if (data.source.empty()) throw Error(ErrorCode::config_invalid, "data must be 'synthetic' or a directory");
  if (data.classes != classifier.num_classes) {
    throw Error(ErrorCode::config_invalid, "data.classes (" + std::to_string(data.classes) +
                                               ") differs from classifier.num_classes (" +
                                               std::to_string(classifier.num_classes) + ")");
  }
  if (split.train < 0 || split.val < 0 || split.test < 0 || std::abs(split.train + split.val + split.test - 1.0) > 1e-9) {
    throw Error(ErrorCode::config_invalid, "split fractions must be non-negative and sum to 1");
  }
  if (eval.batch_size == 0) throw Error(ErrorCode::config_invalid, "eval.batch_size must be positive");
  static const std::vector<std::string> subsets{"test", "val", "train", "all"};
  if (std::find(subsets.begin(), subsets.end(), eval.subset) == subsets.end()) {
    throw Error(ErrorCode::config_invalid, "eval.subset must be test, val, train or all");
  }
  if (kfold.k < 2) throw Error(ErrorCode::config_invalid, "kfold.k must be >= 2");
}

std::string ExperimentConfig::serialize() const {
  std::string out;
  for (const auto& [name, field] : field_table()) out += name + " = " + field.get(*this) + "\n";
  return out;
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a64(serialize()); }

void ExperimentConfig::merge_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::config_invalid, "line " + std::to_string(lineno) + ": expected key = value");
    }
    set(trim(t.substr(0, eq)), t.substr(eq + 1));
  }
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  ExperimentConfig cfg;
  cfg.merge_text(text);
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::config_invalid, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace byolim

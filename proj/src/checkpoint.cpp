// Copyright 2026 The zsqlab Authors
// Licensed under the Apache License, Version 2.0

#include "zsq/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace zsq {

namespace {

constexpr char kMagic[4] = {'Z', 'S', 'Q', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(os, v);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  ZSQ_CHECK(is.good(), "checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  ZSQ_CHECK(is.good(), "checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) {
  const std::uint64_t v = get_u64(is);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

void write_record(std::ostream& os, const std::string& name, const Tensor& t) {
  put_u32(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) put_u64(os, static_cast<std::uint64_t>(d));
  for (std::size_t i = 0; i < t.numel(); ++i) put_f64(os, t.at(i));
}

}  // namespace

void save_checkpoint(const std::string& path, const Graph& g) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  ZSQ_CHECK(os.good(), "checkpoint: cannot open " + path + " for writing");
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  for (std::size_t p = 0; p < g.param_count(); ++p)
    write_record(os, g.param_name(static_cast<int>(p)), g.param(static_cast<int>(p)));
  for (std::size_t i = 0; i < g.bn_state_count(); ++i) {
    const BatchNormState& st = g.bn_state(static_cast<int>(i));
    write_record(os, "bn" + std::to_string(i) + ".running_mean", st.running_mean);
    write_record(os, "bn" + std::to_string(i) + ".running_var", st.running_var);
  }
  ZSQ_CHECK(os.good(), "checkpoint: write failed for " + path);
}

std::vector<std::pair<std::string, Tensor>> read_checkpoint_records(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  ZSQ_CHECK(is.good(), "checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  ZSQ_CHECK(is.good() && std::memcmp(magic, kMagic, 4) == 0,
            "checkpoint: bad magic in " + path);
  const std::uint32_t version = get_u32(is);
  ZSQ_CHECK(version == kVersion, "checkpoint: unsupported version");
  std::vector<std::pair<std::string, Tensor>> records;
  while (true) {
    is.peek();
    if (is.eof()) break;
    const std::uint32_t name_len = get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    ZSQ_CHECK(is.good(), "checkpoint: truncated name");
    const std::uint32_t rank = get_u32(is);
    std::vector<std::size_t> shape(rank);
    for (std::uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<std::size_t>(get_u64(is));
    Tensor t(shape);
    for (std::size_t i = 0; i < t.numel(); ++i) t.at(i) = get_f64(is);
    records.emplace_back(std::move(name), std::move(t));
  }
  return records;
}

void load_checkpoint(const std::string& path, Graph& g) {
  const auto records = read_checkpoint_records(path);
  auto find = [&](const std::string& name) -> const Tensor* {
    for (const auto& [n, t] : records)
      if (n == name) return &t;
    return nullptr;
  };
  for (std::size_t p = 0; p < g.param_count(); ++p) {
    const std::string& name = g.param_name(static_cast<int>(p));
    const Tensor* t = find(name);
    ZSQ_CHECK(t != nullptr, "checkpoint: missing record " + name);
    ZSQ_CHECK(t->shape() == g.param(static_cast<int>(p)).shape(),
              "checkpoint: shape mismatch for " + name);
    g.param_mut(static_cast<int>(p)) = *t;
  }
  for (std::size_t i = 0; i < g.bn_state_count(); ++i) {
    const Tensor* mean = find("bn" + std::to_string(i) + ".running_mean");
    const Tensor* var = find("bn" + std::to_string(i) + ".running_var");
    ZSQ_CHECK(mean && var, "checkpoint: missing bn state " + std::to_string(i));
    BatchNormState& st = g.bn_state_mut(static_cast<int>(i));
    ZSQ_CHECK(mean->numel() == st.running_mean.numel(), "checkpoint: bn shape mismatch");
    st.running_mean = *mean;
    st.running_var = *var;
  }
}

}  // namespace zsq

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "emoflow/tensor.hpp"

namespace emoflow {

// One named array inside a container. `offset` counts doubles into the payload.
struct ContainerEntry {
    std::string name;
    Shape shape;
    int64_t offset = 0;

    int64_t numel() const { return shape_numel(shape); }
};

// Checkpoint / feature-blob file: a UTF-8 text header (version line, kind,
// metadata, tensor manifest) followed by the payload as little-endian 64-bit
// reals. Round trips are bit-exact: save(load(f)) reproduces f byte for byte.
struct Container {
    std::string kind;                         // model/blob tag, single token
    std::map<std::string, std::string> meta;  // sorted on save for stable bytes
    std::vector<ContainerEntry> entries;      // in insertion order
    std::vector<double> payload;

    void add(const std::string& name, const Shape& shape, const std::vector<double>& data);
    void add(const std::string& name, const Tensor& t);

    bool has(const std::string& name) const;
    const ContainerEntry& entry(const std::string& name) const;  // data_error if absent
    std::vector<double> data(const std::string& name) const;
    Tensor tensor(const std::string& name) const;  // no grad tracking

    void save(const std::string& path) const;
    static Container load(const std::string& path);
};

}  // namespace emoflow

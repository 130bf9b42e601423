#pragma once

#include "handmesh/config.hpp"
#include "handmesh/tensor.hpp"

#include <map>
#include <string>
#include <vector>

namespace handmesh {

/// Record file layout:
///   8-byte magic "HMREC001", u64 LE header length, UTF-8 JSON header,
///   then the payload of little-endian float32 values, row-major.
/// The header maps each tensor name to {"offset" (bytes into the payload),
/// "shape"} and carries an optional free-form "meta" object.
struct Record {
    std::map<std::string, Tensor<float>> tensors;
    json meta = json::object();

    const Tensor<float>& at(const std::string& name) const;
};

class RecordError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

void write_record(const std::string& path, const Record& record);
Record read_record(const std::string& path);

}  // namespace handmesh

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "shipid/trajectory.hpp"

namespace shipid {

// Text dataset container:
//
//   # shipid-dataset version=1
//   # trajectory name=R3 label=R dt=0.1 rows=1201
//   t,X,Y,psi,u,vm,r,n,delta,U_A,gamma_a[,du,dvm,dr]
//   <rows>
//   # trajectory ...
//
// SI units and radians. Values are written in shortest round-trip form, so
// write followed by read reproduces every double bit for bit.
inline constexpr int kDatasetVersion = 1;

void write_dataset(const Dataset& data, std::ostream& out);
void write_dataset(const Dataset& data, const std::filesystem::path& path);

// Throws SchemaError for an unsupported version and MalformedFileError (with
// the line number) for truncation, bad headers or non-finite cells.
Dataset read_dataset(std::istream& in, const std::string& source);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace shipid

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace bootplace {

// Lowercase hex SHA-1 of the bytes.
std::string sha1_hex(std::string_view data);

// Git-style object id: SHA-1 of "blob <size>\0" followed by the content, so
// ids line up with what `git hash-object` prints for the same bytes.
std::string blob_hash(std::string_view content);
std::string hash_file(const std::filesystem::path& path);  // throws IoError

// Content id of a directory tree: blob hashes of every regular file keyed by
// its relative path, combined in sorted path order. Identical trees hash
// identically regardless of file timestamps or enumeration order.
std::string hash_tree(const std::filesystem::path& dir);

}  // namespace bootplace

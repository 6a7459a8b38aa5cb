/* Copyright 2026 The Coughnet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "coughnet/manifest.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include "coughnet/errors.hpp"

namespace coughnet {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

std::vector<ManifestRow> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError(path + ": cannot open manifest");

  std::string line;
  if (!std::getline(is, line)) throw MalformedContainer(path + ": empty manifest");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_csv_line(line);

  int col_file = -1, col_label = -1, col_source = -1, col_fold = -1, col_log = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const int idx = static_cast<int>(i);
    if (header[i] == "file") col_file = idx;
    else if (header[i] == "label") col_label = idx;
    else if (header[i] == "source_id") col_source = idx;
    else if (header[i] == "fold") col_fold = idx;
    else if (header[i] == "transform_log") col_log = idx;
  }
  if (col_file < 0 || col_label < 0) {
    throw MalformedContainer(path + ": manifest needs 'file' and 'label' columns");
  }

  std::vector<ManifestRow> rows;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() < header.size()) {
      throw MalformedContainer(path + ":" + std::to_string(line_no) +
                               ": expected " + std::to_string(header.size()) + " fields");
    }
    ManifestRow row;
    row.file = fields[static_cast<std::size_t>(col_file)];
    try {
      row.label = std::stoi(fields[static_cast<std::size_t>(col_label)]);
    } catch (const std::exception&) {
      throw MalformedContainer(path + ":" + std::to_string(line_no) + ": bad label");
    }
    if (row.label != 0 && row.label != 1) {
      throw LabelOutOfDomain(path + ":" + std::to_string(line_no) +
                             ": label must be 0 or 1");
    }
    if (col_source >= 0) row.source_id = fields[static_cast<std::size_t>(col_source)];
    if (col_fold >= 0 && !fields[static_cast<std::size_t>(col_fold)].empty()) {
      row.fold = std::stoi(fields[static_cast<std::size_t>(col_fold)]);
    }
    if (col_log >= 0) row.transform_log = fields[static_cast<std::size_t>(col_log)];
    if (!seen.insert(row.file).second) {
      throw MalformedContainer(path + ":" + std::to_string(line_no) +
                               ": duplicate file " + row.file);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows) {
  bool any_source = false, any_fold = false, any_log = false;
  for (const ManifestRow& r : rows) {
    any_source |= !r.source_id.empty();
    any_fold |= r.fold >= 0;
    any_log |= !r.transform_log.empty();
  }

  std::ofstream os(path);
  if (!os) throw IoError(path + ": cannot open for writing");
  os << "file,label";
  if (any_source) os << ",source_id";
  if (any_fold) os << ",fold";
  if (any_log) os << ",transform_log";
  os << '\n';
  for (const ManifestRow& r : rows) {
    os << r.file << ',' << r.label;
    if (any_source) os << ',' << r.source_id;
    if (any_fold) os << ',' << (r.fold >= 0 ? std::to_string(r.fold) : std::string());
    if (any_log) os << ',' << r.transform_log;
    os << '\n';
  }
  if (!os) throw IoError(path + ": short write");
}

}  // namespace coughnet

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

#ifndef COUGHNET_MANIFEST_HPP_
#define COUGHNET_MANIFEST_HPP_

#include <string>
#include <vector>

namespace coughnet {

// One corpus row. The CSV header names the populated columns: `file,label`
// minimally, plus `source_id`, `fold`, and `transform_log` when present.
// Paths may not contain commas; the manifest format does no quoting.
struct ManifestRow {
  std::string file;
  int label = 0;
  std::string source_id;
  int fold = -1;  // -1 when unassigned
  std::string transform_log;
};

std::vector<ManifestRow> read_manifest(const std::string& path);

void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows);

}  // namespace coughnet

#endif  // COUGHNET_MANIFEST_HPP_

// Copyright 2026 The lknn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Internal JSON conversions; keeps nlohmann/json out of the public headers.

#include <json.hpp>

#include "lknn/attributes.hpp"

namespace lknn::detail {

nlohmann::json attributes_to_json(const AttributeSet& attrs);
AttributeSet attributes_from_json(const nlohmann::json& j);

}  // namespace lknn::detail

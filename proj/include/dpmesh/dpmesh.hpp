// Copyright 2026 The dpmesh Authors
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

#include "dpmesh/accounting.hpp"
#include "dpmesh/budget.hpp"
#include "dpmesh/csv.hpp"
#include "dpmesh/dataset.hpp"
#include "dpmesh/error.hpp"
#include "dpmesh/graph.hpp"
#include "dpmesh/hashutil.hpp"
#include "dpmesh/linalg.hpp"
#include "dpmesh/mafalda.hpp"
#include "dpmesh/manifest.hpp"
#include "dpmesh/matrix.hpp"
#include "dpmesh/model.hpp"
#include "dpmesh/rng.hpp"
#include "dpmesh/simulate.hpp"
#include "dpmesh/trust.hpp"
#include "dpmesh/workload.hpp"

// Copyright 2026 The sfskit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SFSKIT_PARALLEL_HPP_
#define SFSKIT_PARALLEL_HPP_

#include <cstddef>
#include <functional>

namespace sfskit {

// Worker cap from SFSKIT_THREADS. 0 (or 1) means run inline on the calling
// thread; unset means hardware concurrency.
int worker_count();

// Overrides the environment for the current process; negative restores it.
void set_worker_count(int n);

// Runs body(i) for i in [0, n). Each index is handled by exactly one worker
// and the split into contiguous chunks depends only on n and the worker
// count, so bodies that write disjoint outputs are deterministic.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace sfskit

#endif  // SFSKIT_PARALLEL_HPP_

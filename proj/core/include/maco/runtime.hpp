// Copyright 2026 The MACO Authors
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

namespace maco {

/// Keeps large freed blocks inside the process heap instead of returning them
/// to the kernel. Activation buffers of an 84x84 minibatch are hundreds of MB
/// and are reallocated every step; without this each step pays fresh page
/// faults for all of them. No-op outside glibc.
void tune_allocator();

}  // namespace maco

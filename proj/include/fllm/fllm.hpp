#pragma once

#include "fllm/catalog.hpp"
#include "fllm/chat.hpp"
#include "fllm/config.hpp"
#include "fllm/embedding.hpp"
#include "fllm/error.hpp"
#include "fllm/eval.hpp"
#include "fllm/http_backends.hpp"
#include "fllm/inference.hpp"
#include "fllm/parallel.hpp"
#include "fllm/prompts.hpp"
#include "fllm/qagen.hpp"
#include "fllm/retrieval.hpp"
#include "fllm/rng.hpp"
#include "fllm/service.hpp"
#include "fllm/text.hpp"
#include "fllm/vector_index.hpp"

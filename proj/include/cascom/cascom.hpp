#pragma once

// Engine umbrella header (everything except the HTTP service).

#include "cascom/composer.hpp"
#include "cascom/context.hpp"
#include "cascom/cost.hpp"
#include "cascom/deploy.hpp"
#include "cascom/error.hpp"
#include "cascom/hash.hpp"
#include "cascom/kb.hpp"
#include "cascom/kb_json.hpp"
#include "cascom/kind.hpp"
#include "cascom/qa.hpp"
#include "cascom/results_json.hpp"

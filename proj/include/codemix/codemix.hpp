#pragma once

#include "codemix/access.hpp"
#include "codemix/amp.hpp"
#include "codemix/bits.hpp"
#include "codemix/bp.hpp"
#include "codemix/error.hpp"
#include "codemix/extraction.hpp"
#include "codemix/factor_graph.hpp"
#include "codemix/gf2m.hpp"
#include "codemix/harness.hpp"
#include "codemix/rng.hpp"
#include "codemix/scenario.hpp"
#include "codemix/sectioned_vector.hpp"
#include "codemix/sensing.hpp"
#include "codemix/wht.hpp"

"""
MIRG API - tail estimation and small-graph generation service.
Wraps the Hill / Hillish estimators, the MIRG generator and the numerical
verification suites.
"""

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
import logging
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field

from app.models.errors import MirgError
from app.services.cones import xi_eta
from app.services.evt import hill_trace, hillish_pair, norms
from app.services.mirg_graph import DegreeMatrix, LayerSpec, degrees, generate
from app.services.oracles import SUITES, run_suite
from app.services.samplers import RngStream
from app.services.weights import FullDependence, HrvMixture, SingleFactor, sample_weights

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

VERSION = "1.0.0"
MAX_GENERATE_NODES = 5_000
MAX_VERIFY_DRAWS = 1_000_000

app = FastAPI(
    title="MIRG Toolkit",
    description="Multilayer inhomogeneous random graphs and tail-index estimation",
    version=VERSION
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


# ============================================
# REQUEST MODELS
# ============================================

class HillRequest(BaseModel):
    values: Optional[List[float]] = None
    degrees: Optional[List[List[int]]] = None
    p: float = 1.0
    ks: List[int] = Field(min_length=1)


class HillishRequest(BaseModel):
    degrees: List[List[int]]
    ks: List[int] = Field(min_length=1)
    slope: float = 1.5


class GenerateRequest(BaseModel):
    model: Literal["hrv", "full", "single"] = "single"
    n: int = Field(ge=0, le=MAX_GENERATE_NODES)
    alpha: float = 1.4
    alpha0: Optional[float] = None
    layers: List[str] = ["multi_edge:identity", "single_edge:exp_complement"]
    method: Literal["fast", "naive"] = "fast"
    seed: int = Field(default=0, ge=0)


class VerifyRequest(BaseModel):
    seed: int = Field(default=0, ge=0)
    draws: int = Field(default=100_000, ge=1, le=MAX_VERIFY_DRAWS)


def _fail(e: Exception, what: str):
    if isinstance(e, MirgError):
        logger.warning(f"{what} rejected: {e.category}: {e}")
        raise HTTPException(status_code=400, detail=f"{e.category}: {e}")
    logger.error(f"{what} failed: {str(e)}", exc_info=True)
    raise HTTPException(status_code=500, detail=f"{what} failed: {str(e)}")


# ============================================
# ENDPOINTS
# ============================================

@app.get("/")
async def root():
    return {
        "service": "MIRG Toolkit",
        "version": VERSION,
        "estimators": ["hill", "hillish"],
        "verify_suites": list(SUITES),
    }


@app.get("/health")
async def health_check():
    """Health check endpoint."""
    return {"status": "healthy", "version": VERSION}


@app.post("/hill")
async def hill_endpoint(request: HillRequest) -> Dict[str, Any]:
    """
    Hill estimates over ks, either on raw values or on the p-norms of a degree matrix.
    k values with a zero (k+1)-th order statistic are reported under "skipped".
    """
    if (request.values is None) == (request.degrees is None):
        raise HTTPException(status_code=400, detail="Provide exactly one of values or degrees")
    try:
        if request.degrees is not None:
            values = norms(DegreeMatrix(request.degrees), request.p)
        else:
            values = request.values
        estimates, skipped = hill_trace(values, request.ks)
    except Exception as e:
        _fail(e, "Hill estimation")
    logger.info(f"Hill request: {len(estimates)} estimates, {len(skipped)} skipped")
    return {
        "estimates": [{"k": e.k, "hill": e.hill, "alpha_hat": e.alpha_hat} for e in estimates],
        "skipped": skipped,
    }


@app.post("/hillish")
async def hillish_endpoint(request: HillishRequest) -> Dict[str, Any]:
    try:
        pairs = xi_eta(DegreeMatrix(request.degrees), request.slope)
        xi, eta = pairs.retained()
        pos, neg = hillish_pair(xi, eta, request.ks)
    except Exception as e:
        _fail(e, "Hillish estimation")
    return {
        "ks": pos.ks,
        "hillish_pos": pos.values,
        "hillish_neg": neg.values,
        "excluded": pairs.n_excluded,
    }


@app.post("/generate")
async def generate_endpoint(request: GenerateRequest) -> Dict[str, Any]:
    """Sample weights and one graph; returns the degree matrix and per-layer edge counts."""
    try:
        if request.model == "hrv":
            if request.alpha0 is None:
                raise HTTPException(status_code=400, detail="alpha0 is required for the hrv model")
            spec = HrvMixture(request.alpha, request.alpha0)
        elif request.model == "full":
            spec = FullDependence(request.alpha)
        else:
            spec = SingleFactor(request.alpha)
        layers = [LayerSpec.parse(text) for text in request.layers]
        rng = RngStream(request.seed)
        w = sample_weights(spec, request.n, rng.child("weights"))
        graph = generate(w, layers, rng.child("graph"), method=request.method)
        d = degrees(graph)
    except HTTPException:
        raise
    except Exception as e:
        _fail(e, "Generation")
    logger.info(f"Generated graph: n={graph.n}, L={graph.L}")
    return {
        "n": graph.n,
        "layers": [str(layer) for layer in layers],
        "edge_counts": [graph.edge_count(l) for l in range(graph.L)],
        "degrees": d.d.tolist(),
    }


@app.post("/verify/{suite}")
async def verify_endpoint(suite: str, request: VerifyRequest) -> Dict[str, Any]:
    if suite not in SUITES:
        raise HTTPException(status_code=404, detail=f"Unknown suite: {suite}. Available: {', '.join(SUITES)}")
    try:
        report = run_suite(suite, RngStream(request.seed), draws=request.draws)
    except Exception as e:
        _fail(e, f"Verification suite {suite}")
    return {"name": report.name, "passed": report.passed, "rows": report.rows}

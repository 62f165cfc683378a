"""Deterministic API-cost model: per-request token economics, monthly
cost per caching strategy, savings, sensitivity, and volume scaling.

Prices and token profiles are configuration, not constants; the shipped
defaults reproduce the published comparison (no-cache $31.72/month at 50
requests/day, tiered caching $0.80, 97.5% savings). Cost is exactly
linear in request volume and in days, so savings percentages are
invariant to scale at fixed traffic shares.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidParams, SharesInvalid

SHARE_TOL = 1e-9

# Escalation model for the local-share sensitivity sweep: the fraction of
# fallback traffic needing the deep tier grows linearly with the fallback
# share r = 1 - local, anchored to the two published operating points
# (15% fallback -> 1/15 escalation, 30% fallback -> 1/6 escalation).
ESC_SLOPE = 2.0 / 3.0
ESC_INTERCEPT = -1.0 / 30.0


@dataclass(frozen=True)
class TokenProfile:
    input_tokens: int
    output_tokens: int

    def __post_init__(self):
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise InvalidParams("token counts must be nonnegative")


@dataclass(frozen=True)
class PricePoint:
    usd_per_m_input: float
    usd_per_m_output: float

    def __post_init__(self):
        if self.usd_per_m_input < 0 or self.usd_per_m_output < 0:
            raise InvalidParams("prices must be nonnegative")

    @property
    def is_free(self) -> bool:
        return self.usd_per_m_input == 0.0 and self.usd_per_m_output == 0.0


FREE = PricePoint(0.0, 0.0)
NO_TOKENS = TokenProfile(0, 0)


@dataclass(frozen=True)
class TierEconomics:
    """One row of a strategy: traffic share, token profile, price point."""

    tier_id: int
    traffic_share: float
    profile: TokenProfile
    price: PricePoint

    def __post_init__(self):
        if not 0.0 <= self.traffic_share <= 1.0:
            raise InvalidParams(f"traffic share {self.traffic_share} outside [0,1]")


@dataclass(frozen=True)
class ScenarioResult:
    strategy: str
    monthly_cost_usd: float
    savings_pct: float
    local_share: float

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "monthly_cost_usd": self.monthly_cost_usd,
            "savings_pct": self.savings_pct,
            "local_share": self.local_share,
        }


def per_request_cost(profile: TokenProfile, price: PricePoint) -> float:
    """USD cost of one request at the given token profile and pricing."""
    return (
        profile.input_tokens * price.usd_per_m_input
        + profile.output_tokens * price.usd_per_m_output
    ) / 1e6


def monthly_cost(
    requests_per_day: int,
    tiers: list[TierEconomics],
    days: int = 30,
    baseline_monthly_usd: float | None = None,
    strategy: str = "custom",
) -> ScenarioResult:
    """Blend per-tier costs over a month of traffic.

    Tier shares must sum to 1; local share is the total share of
    zero-price tiers. Savings are relative to ``baseline_monthly_usd``
    (0 when no baseline is given, i.e. for the baseline itself).
    """
    if requests_per_day < 0 or days < 0:
        raise InvalidParams("requests_per_day and days must be nonnegative")
    total_share = sum(t.traffic_share for t in tiers)
    if abs(total_share - 1.0) > SHARE_TOL:
        raise SharesInvalid(f"tier shares sum to {total_share}, expected 1")
    requests = requests_per_day * days
    cost = sum(
        t.traffic_share * requests * per_request_cost(t.profile, t.price) for t in tiers
    )
    local = sum(t.traffic_share for t in tiers if t.price.is_free)
    if baseline_monthly_usd is None or baseline_monthly_usd == 0.0:
        savings = 0.0
    else:
        savings = 1.0 - cost / baseline_monthly_usd
    return ScenarioResult(
        strategy=strategy, monthly_cost_usd=cost, savings_pct=savings, local_share=local
    )


# ---------------------------------------------------------------------------
# Pricing configuration and strategy construction
# ---------------------------------------------------------------------------

DEFAULT_PRICING = {
    "prices": {
        "tier3": {"usd_per_m_input": 0.28, "usd_per_m_output": 0.42},
        "tier4": {"usd_per_m_input": 3.00, "usd_per_m_output": 15.00},
    },
    "profiles": {
        "full_agent": {"input_tokens": 1050, "output_tokens": 1200},
        "extraction": {"input_tokens": 400, "output_tokens": 100},
        "deep_agent": {"input_tokens": 2000, "output_tokens": 3000},
    },
    "traffic": {"local": 0.85, "tier3": 0.14, "tier4": 0.01},
    "baselines": {"apc_hit_rate": 0.06, "gptcache_hit_rate": 0.379},
    "volume": {"requests_per_day": 50, "days_per_month": 30},
}


@dataclass(frozen=True)
class PricingConfig:
    tier3_price: PricePoint
    tier4_price: PricePoint
    full_agent: TokenProfile
    extraction: TokenProfile
    deep_agent: TokenProfile
    local_share: float
    tier3_share: float
    tier4_share: float
    apc_hit_rate: float
    gptcache_hit_rate: float
    requests_per_day: int
    days_per_month: int

    @classmethod
    def from_dict(cls, raw: dict) -> "PricingConfig":
        merged = {
            section: {**DEFAULT_PRICING[section], **raw.get(section, {})}
            for section in DEFAULT_PRICING
        }
        prices = {
            name: {**DEFAULT_PRICING["prices"][name], **merged["prices"].get(name, {})}
            for name in DEFAULT_PRICING["prices"]
        }
        profiles = {
            name: {**DEFAULT_PRICING["profiles"][name], **merged["profiles"].get(name, {})}
            for name in DEFAULT_PRICING["profiles"]
        }
        return cls(
            tier3_price=PricePoint(**prices["tier3"]),
            tier4_price=PricePoint(**prices["tier4"]),
            full_agent=TokenProfile(**profiles["full_agent"]),
            extraction=TokenProfile(**profiles["extraction"]),
            deep_agent=TokenProfile(**profiles["deep_agent"]),
            local_share=merged["traffic"]["local"],
            tier3_share=merged["traffic"]["tier3"],
            tier4_share=merged["traffic"]["tier4"],
            apc_hit_rate=merged["baselines"]["apc_hit_rate"],
            gptcache_hit_rate=merged["baselines"]["gptcache_hit_rate"],
            requests_per_day=int(merged["volume"]["requests_per_day"]),
            days_per_month=int(merged["volume"]["days_per_month"]),
        )

    @classmethod
    def default(cls) -> "PricingConfig":
        return cls.from_dict({})


def no_cache_tiers(cfg: PricingConfig) -> list[TierEconomics]:
    return [TierEconomics(4, 1.0, cfg.full_agent, cfg.tier4_price)]


def free_hit_tiers(cfg: PricingConfig, hit_rate: float) -> list[TierEconomics]:
    """Baseline shape for APC/GPTCache: free hits, full-agent misses."""
    return [
        TierEconomics(0, hit_rate, NO_TOKENS, FREE),
        TierEconomics(4, 1.0 - hit_rate, cfg.full_agent, cfg.tier4_price),
    ]


def tiered_cache_tiers(
    cfg: PricingConfig,
    local: float | None = None,
    tier3: float | None = None,
    tier4: float | None = None,
) -> list[TierEconomics]:
    """The five-tier strategy: local tiers free, extraction tier, deep tier."""
    local = cfg.local_share if local is None else local
    tier3 = cfg.tier3_share if tier3 is None else tier3
    tier4 = cfg.tier4_share if tier4 is None else tier4
    return [
        TierEconomics(0, local, NO_TOKENS, FREE),
        TierEconomics(3, tier3, cfg.extraction, cfg.tier3_price),
        TierEconomics(4, tier4, cfg.deep_agent, cfg.tier4_price),
    ]


STRATEGIES = ("no_cache", "apc", "gptcache", "w5h2")


def evaluate_strategies(
    cfg: PricingConfig, requests_per_day: int | None = None, days: int | None = None
) -> dict[str, ScenarioResult]:
    """Monthly cost for every named strategy, with no_cache as baseline."""
    req = cfg.requests_per_day if requests_per_day is None else requests_per_day
    days = cfg.days_per_month if days is None else days
    baseline = monthly_cost(req, no_cache_tiers(cfg), days, strategy="no_cache")
    base_usd = baseline.monthly_cost_usd
    return {
        "no_cache": baseline,
        "apc": monthly_cost(
            req, free_hit_tiers(cfg, cfg.apc_hit_rate), days, base_usd, "apc"
        ),
        "gptcache": monthly_cost(
            req, free_hit_tiers(cfg, cfg.gptcache_hit_rate), days, base_usd, "gptcache"
        ),
        "w5h2": monthly_cost(req, tiered_cache_tiers(cfg), days, base_usd, "w5h2"),
    }


# ---------------------------------------------------------------------------
# Sensitivity and scaling
# ---------------------------------------------------------------------------

def split_remainder(local: float, rule: str = "calibrated") -> tuple[float, float]:
    """Split fallback traffic (1 − local) between the cheap and deep tiers.

    ``calibrated`` (default) uses the linear escalation model anchored to
    the published $0.80 / $3.88 operating points; ``fixed_ratio`` keeps
    the architecture's 14:1 split at every local share.
    """
    if not 0.0 <= local <= 1.0:
        raise InvalidParams(f"local share {local} outside [0,1]")
    remainder = 1.0 - local
    if rule == "fixed_ratio":
        return remainder * 14.0 / 15.0, remainder / 15.0
    if rule != "calibrated":
        raise InvalidParams(f"unknown remainder split rule {rule!r}")
    escalation = min(max(ESC_SLOPE * remainder + ESC_INTERCEPT, 0.0), 1.0)
    tier4 = remainder * escalation
    return remainder - tier4, tier4


def sensitivity(
    local_shares,
    cfg: PricingConfig | None = None,
    requests_per_day: int | None = None,
    days: int | None = None,
    rule: str = "calibrated",
) -> list[ScenarioResult]:
    """Monthly cost of the tiered strategy across a grid of local shares."""
    cfg = cfg or PricingConfig.default()
    req = cfg.requests_per_day if requests_per_day is None else requests_per_day
    days = cfg.days_per_month if days is None else days
    base = monthly_cost(req, no_cache_tiers(cfg), days).monthly_cost_usd
    results = []
    for local in local_shares:
        tier3, tier4 = split_remainder(float(local), rule)
        tiers = tiered_cache_tiers(cfg, float(local), tier3, tier4)
        results.append(monthly_cost(req, tiers, days, base, f"w5h2@{float(local):.2f}"))
    return results


def scaling_table(
    req_per_day_list, cfg: PricingConfig | None = None, days: int | None = None
) -> list[dict]:
    """Monthly cost per strategy across request volumes (linear in volume)."""
    cfg = cfg or PricingConfig.default()
    rows = []
    for req in req_per_day_list:
        results = evaluate_strategies(cfg, int(req), days)
        rows.append(
            {
                "requests_per_day": int(req),
                **{name: results[name].monthly_cost_usd for name in STRATEGIES},
                "w5h2_savings_pct": results["w5h2"].savings_pct,
            }
        )
    return rows

# wsnsim/models.py
from sqlalchemy import Boolean, Column, DateTime, Float, Integer, String, Text
from sqlalchemy.sql import func

from .database import Base, make_session
from .outputs import RunRecord, fmt


# --- TABLES ---
class RunResult(Base):
    __tablename__ = "run_results"

    id = Column(Integer, primary_key=True, index=True)
    scenario_hash = Column(String, index=True, nullable=False)
    seed = Column(Integer, nullable=False)
    protocol = Column(String, nullable=False)  # e2xlradr / dsr
    vary_key = Column(String, nullable=True)
    vary_value = Column(String, nullable=True)

    lifetime_ticks = Column(Integer, nullable=False)
    lifetime_censored = Column(Boolean, default=False)
    throughput_bps = Column(Float, default=0.0)
    mean_delay_ticks = Column(Float, nullable=True)  # empty when nothing was delivered
    delivery_ratio = Column(Float, default=0.0)
    generated = Column(Integer, default=0)
    delivered = Column(Integer, default=0)
    total_energy_j = Column(Float, default=0.0)
    retransmissions_total = Column(Integer, default=0)
    deaths = Column(Integer, default=0)
    per_node_death_times = Column(Text, default="")

    created_at = Column(DateTime(timezone=True), server_default=func.now())

    @classmethod
    def from_record(cls, rec: RunRecord) -> "RunResult":
        m = rec.metrics
        return cls(
            scenario_hash=rec.scenario_hash,
            seed=rec.seed,
            protocol=rec.protocol,
            vary_key=rec.vary_key,
            vary_value=rec.vary_value,
            lifetime_ticks=m.lifetime_ticks,
            lifetime_censored=m.lifetime_censored,
            throughput_bps=m.throughput_bps,
            mean_delay_ticks=m.mean_delay_ticks,
            delivery_ratio=m.delivery_ratio,
            generated=m.generated,
            delivered=m.delivered,
            total_energy_j=m.total_energy_j,
            retransmissions_total=m.retransmissions_total,
            deaths=m.deaths,
            per_node_death_times=";".join(f"{n}:{fmt(t)}" for n, t in m.per_node_death_times),
        )


def store_results(url: str, records) -> int:
    """Append metrics rows to the run_results table at url; returns rows written."""
    SessionLocal = make_session(url)
    db = SessionLocal()
    try:
        rows = [RunResult.from_record(r) for r in sorted(records, key=RunRecord.sort_key)]
        db.add_all(rows)
        db.commit()
        return len(rows)
    except Exception:
        db.rollback()
        raise
    finally:
        db.close()

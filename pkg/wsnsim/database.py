# wsnsim/database.py
from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import declarative_base, sessionmaker

Base = declarative_base()


def normalize_url(url: str) -> str:
    # postgres:// is the legacy scheme some hosts hand out; SQLAlchemy wants postgresql://
    if url.startswith("postgres://"):
        return url.replace("postgres://", "postgresql://", 1)
    return url


def make_engine(url: str) -> Engine:
    url = normalize_url(url)
    engine_kwargs = {"pool_pre_ping": True}
    # SQLite needs a special connect arg; other backends do not.
    if url.startswith("sqlite://"):
        engine_kwargs["connect_args"] = {"check_same_thread": False}
    return create_engine(url, **engine_kwargs)


def make_session(url: str):
    """Create the tables if needed and return a session factory bound to url."""
    engine = make_engine(url)
    Base.metadata.create_all(bind=engine)
    return sessionmaker(autocommit=False, autoflush=False, bind=engine)

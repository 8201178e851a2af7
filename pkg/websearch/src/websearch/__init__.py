from .client import (FixtureDriver, LiveDriver, NoResultsError, QuerySpec,
                     SearchResult, fetch_samples)

__all__ = ["FixtureDriver", "LiveDriver", "NoResultsError", "QuerySpec",
           "SearchResult", "fetch_samples"]

"""revstrike: a two-phase XSS test harness for network scanning systems.

Phase 1 serves grammar-fuzzed, token-seeded HTTP responses to the scanner
under test and matches the tokens against its report to enumerate tainted
flows.  Phase 2 replays the recorded responses with XSS polyglot payloads
substituted for the tainted tokens and confirms which flows are exploitable.

Only test systems you are authorized to test.
"""

__version__ = "0.1.0"

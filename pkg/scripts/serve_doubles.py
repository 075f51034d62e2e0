"""Serve the fixture site and a local save endpoint for hands-on CLI runs.

    python3 scripts/serve_doubles.py
    # in another shell, using the printed ports:
    proarchiver run --url http://127.0.0.1:PORT/ --endpoint http://127.0.0.1:PORT2 \\
        --state /tmp/demo.jsonl --pacing 0 --politeness 0

Ctrl-C stops both servers and prints every save request received.
"""

import argparse
import time

from proarchiver.doubles import LocalSite, SaveEndpointDouble, flat_site, micro_site


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--flat", type=int, default=0, help="serve a flat site of this many pages instead")
    ap.add_argument("--script", nargs="*", default=[], help="endpoint statuses to replay first, e.g. 200 429 drop")
    args = ap.parse_args()

    build = (lambda origin: flat_site(origin, args.flat)) if args.flat else micro_site
    script = [s if s == "drop" else int(s) for s in args.script]
    with LocalSite(build) as site, SaveEndpointDouble(script) as endpoint:
        print(f"site:     {site.origin}/")
        print(f"endpoint: {endpoint.origin}", flush=True)
        try:
            while True:
                time.sleep(1)
        except KeyboardInterrupt:
            pass
        print(f"\n{len(endpoint.paths)} save requests:")
        for path in endpoint.paths:
            print(" ", path)


if __name__ == "__main__":
    main()

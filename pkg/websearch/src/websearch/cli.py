"""`fetch-samples` command: retrieve ranked sample images for an input
photo and write a samples directory plus manifest."""

import sys

import click

from .client import (FixtureDriver, LiveDriver, NoResultsError, QuerySpec,
                     fetch_samples)


@click.command("fetch-samples")
@click.option("--image", "image_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Query image.")
@click.option("--keyword", default="", help="Optional search keyword.")
@click.option("--m", default=8, show_default=True,
              help="Number of samples to fetch.")
@click.option("--out", "output_dir", default="samples", show_default=True,
              type=click.Path(file_okay=False),
              help="Directory for samples and manifest.")
@click.option("--fixture", "fixture_dir", default=None,
              type=click.Path(exists=True, file_okay=False),
              help="Serve results from this directory instead of the web.")
def cli(image_path, keyword, m, output_dir, fixture_dir):
    driver = FixtureDriver(fixture_dir) if fixture_dir else LiveDriver()
    query = QuerySpec(image_path=image_path, keyword=keyword, m=m,
                      output_dir=output_dir)
    path = fetch_samples(query, driver)
    click.echo(f"wrote {path}")


def main(argv=None):
    try:
        return cli.main(args=argv, standalone_mode=False) or 0
    except click.UsageError as e:
        e.show(file=sys.stderr)
        return 1
    except click.exceptions.Exit as e:
        return e.exit_code
    except NoResultsError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (click.ClickException, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

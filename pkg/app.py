from flask import Flask, jsonify, request
from flask_cors import CORS

from database import ResultsDatabase

MAX_SLOT_ROWS = 100000


def create_app(db=None):
    app = Flask(__name__)
    CORS(app)
    db = db or ResultsDatabase()

    # ===== API Routes =====

    @app.route('/api/runs', methods=['GET'])
    def api_get_runs():
        """List stored runs, optionally filtered by tier and scheme"""
        tier = request.args.get('tier', '').strip() or None
        scheme = request.args.get('scheme', '').strip() or None
        runs = db.get_all_runs(tier, scheme)
        return jsonify({'runs': runs, 'count': len(runs)})

    @app.route('/api/runs/<path:run_key>', methods=['GET'])
    def api_get_run(run_key):
        """One run's aggregates; a trailing /slots returns its per-slot series"""
        if run_key.endswith('/slots'):
            return _slots(run_key[:-len('/slots')])

        run = db.get_run(run_key)
        if run is None:
            return jsonify({'error': f'Run "{run_key}" not found'}), 404
        return jsonify(run)

    def _slots(run_key):
        try:
            limit = int(request.args.get('limit', MAX_SLOT_ROWS))
            limit = min(max(limit, 1), MAX_SLOT_ROWS)
        except ValueError:
            return jsonify({'error': 'Invalid limit parameter'}), 400

        if db.get_run(run_key) is None:
            return jsonify({'error': f'Run "{run_key}" not found'}), 404
        slots = db.get_slots(run_key, limit)
        return jsonify({
            'run_key': run_key,
            'count': len(slots),
            'slots': slots.to_dict(orient='records'),
        })

    @app.route('/api/summary', methods=['GET'])
    def api_power_summary():
        """Mean power and queue per tier, scheme and V across seeds"""
        table = db.get_power_comparison()
        return jsonify({'rows': table.to_dict(orient='records')})

    @app.route('/api/stats', methods=['GET'])
    def api_get_statistics():
        """Get database statistics"""
        stats = db.get_stats()
        return jsonify({
            'total_runs': stats['total_runs'],
            'total_slots': stats['total_slots'],
            'latest_run': stats['latest_run'],
            'scheme_details': [
                {'tier': row[0], 'scheme': row[1], 'runs': row[2]}
                for row in stats['scheme_stats']
            ],
        })

    @app.route('/api/health', methods=['GET'])
    def api_health_check():
        """Health check endpoint"""
        return jsonify({'status': 'healthy', 'service': 'UDN Energy Results API'})

    # Error handlers
    @app.errorhandler(404)
    def not_found(error):
        return jsonify({'error': 'Endpoint not found'}), 404

    @app.errorhandler(500)
    def internal_error(error):
        return jsonify({'error': 'Internal server error'}), 500

    return app


def print_banner(port):
    print("\n" + "=" * 50)
    print("UDN Energy Results API")
    print("=" * 50)
    print(f"\nListening on: http://localhost:{port}")
    print("\nAPI Endpoints:")
    print("  GET /api/runs?tier=<optional>&scheme=<optional>")
    print("  GET /api/runs/<run_key>")
    print("  GET /api/runs/<run_key>/slots?limit=<n>")
    print("  GET /api/summary")
    print("  GET /api/stats")
    print("  GET /api/health")
    print("\n" + "=" * 50 + "\n")


if __name__ == '__main__':
    print_banner(8080)
    create_app().run(debug=True, port=8080, host='127.0.0.1')
